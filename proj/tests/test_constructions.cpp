#include "hmmlab/construct/theorem1.hpp"
#include "hmmlab/construct/theorem3.hpp"
#include "hmmlab/construct/verify.hpp"
#include "hmmlab/filtering.hpp"
#include "hmmlab/rollout.hpp"
#include "hmmlab/train/block_cot.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace hmmlab;
using namespace hmmlab::construct;

namespace {

Matrix pack_operands(const Matrix& A, const Matrix& B) {
  const auto n = A.rows();
  Matrix x = Matrix::Zero(1, 2 * n * n + 1);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) {
      x(0, r * n + c) = A(r, c);
      x(0, n * n + r * n + c) = B(r, c);
    }
  x(0, 2 * n * n) = 1.0;
  return x;
}

Matrix product_slot(const Matrix& y, Eigen::Index n) {
  Matrix out(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) out(r, c) = y(0, n * n + r * n + c);
  return out;
}

}  // namespace

TEST(ProductCell, ExactZeroAndSymmetry) {
  for (double lambda : {1.0, 8.0, 64.0})
    for (double b : {-1.9, -0.2, 0.0, 0.7, 2.0}) {
      EXPECT_EQ(product_cell(0.0, b, lambda), 0.0);
      EXPECT_EQ(product_cell(0.37, b, lambda), product_cell(b, 0.37, lambda));
    }
}

TEST(ProductCell, CalibratedGridError) {
  ProductCalibration cal;
  const Ffn f = build_product_mlp(2.0, 1e-3, &cal);
  EXPECT_LE(cal.grid_error, 1e-3);
  EXPECT_LE(product_grid_error(2.0, cal.lambda), 1e-3);
  Matrix x(1, 2);
  x << 1.3, -0.6;
  EXPECT_NEAR(f.apply(x)(0, 0), 1.3 * -0.6, 1e-3);
  EXPECT_THROW(calibrate_product(2.0, 1e-30, 3), CalibrationError);
}

TEST(MatmulMlp, IdentityOrZeroOperandGivesZeroCorrection) {
  Stream r(3, 0);
  const Ffn f = build_matmul_mlp(3, 2.0, 1e-6);
  const Matrix B = haar_orthogonal(r, 3);
  EXPECT_LE(product_slot(f.apply(pack_operands(Matrix::Identity(3, 3), B)), 3).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(product_slot(f.apply(pack_operands(B, Matrix::Zero(3, 3))), 3).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MatmulMlp, RandomOrthogonalOperands) {
  Stream r(4, 0);
  MatmulMlpInfo info;
  const Ffn f = build_matmul_mlp(3, 2.0, 1e-6, &info);
  EXPECT_EQ(info.width, 4 * 27 + 2 * 9);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix A = haar_orthogonal(r, 3), B = haar_orthogonal(r, 3);
    const Matrix y = f.apply(pack_operands(A, B));
    EXPECT_LE((product_slot(y, 3) - (A - Matrix::Identity(3, 3)) * B).cwiseAbs().maxCoeff(), 1e-6);
    // The A slot is cleared by the residual.
    EXPECT_LE((y.leftCols(9) + pack_operands(A, B).leftCols(9)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(RnnConstruction, QuarterTurnTwice) {
  LinearSystem sys;
  sys.n = 2;
  sys.m = 1;
  Matrix R(2, 2);
  R << 0, -1,  //
      1, 0;
  sys.A = {R};
  sys.s0 = one_hot(2, 0);
  const auto c = build_rnn_theorem1(sys);
  EXPECT_DOUBLE_EQ(c.alpha, 4.0);
  const auto out = nn::rnn_forward(c.weights, one_hot_inputs({0, 0}, 1)).output;
  EXPECT_NEAR(out(1, 0), -1.0, 1e-15);
  EXPECT_NEAR(out(1, 1), 0.0, 1e-15);
}

TEST(RnnConstruction, DeterministicCyclicIsExactWithClosedGates) {
  const ModelInstance mi = make_model({ModelKind::cyclic_det, 5, 5, 3});
  const auto sys = linear_system(mi);
  const auto c = build_rnn_theorem1(sys);
  EXPECT_EQ(c.weights.hidden(), 25);
  for (int i = 0; i < 5; ++i) {
    const Trajectory tr = rollout(mi, 120, 1, TargetKind::belief, static_cast<std::uint64_t>(i));
    const auto rep = verify_rnn(c, sys, tr.obs);
    EXPECT_LE(rep.final_error, 1e-9);
    EXPECT_LT(rep.gate_margin, 0.0);
    EXPECT_TRUE(rep.ok);
  }
}

TEST(RnnConstruction, MatMulIsExact) {
  const ModelInstance mi = make_model({ModelKind::matmul, 5, 5, 2});
  const auto sys = linear_system(mi);
  const auto c = build_rnn_theorem1(sys);
  const Trajectory tr = rollout(mi, 120, 3);
  EXPECT_LE(verify_rnn(c, sys, tr.obs).final_error, 1e-9);
}

TEST(RnnConstruction, StochasticHmmIsUnsupported) {
  const ModelInstance mi = make_model({ModelKind::hmm, 3, 3, 1});
  EXPECT_THROW(build_rnn_theorem1(mi), UnsupportedModelError);
  const ModelInstance lds = make_model({ModelKind::lds, 3, 3, 1});
  EXPECT_THROW(linear_system(lds), UnsupportedModelError);
}

TEST(LogDepthConstruction, LayoutSizes) {
  const ModelInstance mi = make_model({ModelKind::matmul, 3, 3, 1});
  const auto c = build_tf_theorem2(mi, 16);
  EXPECT_EQ(c.weights.cfg.d, 24);
  EXPECT_EQ(c.params.mlp_width, 126);
  EXPECT_EQ(c.weights.cfg.heads, 2);
  EXPECT_EQ(c.params.L, 4);
  EXPECT_NEAR(c.params.eta, 1.0 / (std::pow(24.0, 5) * 16.0), 1e-22);
  EXPECT_NEAR(c.params.eta, 7.85e-9, 0.01e-9);
  EXPECT_NEAR(c.params.gamma, 637.6, 0.1);
}

TEST(LogDepthConstruction, InputEncodingEndpoints) {
  const Matrix x = augment_input({0, 1, 2, 0, 1, 2, 0, 1}, 8, 3);
  const Tf2Input in{3, 0, false};
  EXPECT_EQ(x(0, in.sin_col()), 0.0);
  EXPECT_EQ(x(0, in.cos_col()), 1.0);
  EXPECT_EQ(x(0, in.one_col()), 1.0);
  EXPECT_NEAR(x(8, in.sin_col()), std::sin(std::numbers::pi / 4), 1e-15);
  EXPECT_NEAR(x(8, in.cos_col()), std::cos(std::numbers::pi / 4), 1e-15);
}

TEST(LogDepthConstruction, PositionalSeparationAwayFromStart) {
  for (int T = 8; T <= 128; ++T) {
    const double bound = std::numbers::pi * std::numbers::pi / (32.0 * T * T);
    for (int i = 1; i < T; ++i) EXPECT_GE(std::cos(pe_angle(i, T)) - std::cos(pe_angle(i + 1, T)), bound);
    // The first pair falls short of the quadratic bound by under 0.1%.
    const double first = 1.0 - std::cos(pe_angle(1, T));
    EXPECT_LT(first, bound);
    EXPECT_GT(first, 0.999 * bound);
  }
}

TEST(LogDepthConstruction, IdentityObservationsKeepStart) {
  LinearSystem sys;
  sys.n = 2;
  sys.m = 1;
  sys.A = {Matrix::Identity(2, 2)};
  sys.s0 = one_hot(2, 1);
  const auto c = build_tf_theorem2(sys, 2);
  EXPECT_EQ(c.params.L, 1);
  const Matrix y = nn::transformer_forward(c.weights, augment_input({0, 0}, 2, 1));
  for (Eigen::Index i = 1; i < y.rows(); ++i) EXPECT_LE((y.row(i).transpose() - sys.s0).cwiseAbs().maxCoeff(), 0.5);
}

TEST(LogDepthConstruction, MatMulLayersWithinBounds) {
  const ModelInstance mi = make_model({ModelKind::matmul, 3, 3, 4});
  const auto c = build_tf_theorem2(mi, 16);
  for (int i = 0; i < 3; ++i) {
    const Trajectory tr = rollout(mi, 16, 2, TargetKind::belief, static_cast<std::uint64_t>(i));
    const auto rep = verify_construction(c, tr.obs);
    EXPECT_EQ(rep.per_layer_error.at(0), 0.0);
    for (double g : rep.attention_one_hot_gap) EXPECT_LE(g, c.params.eta);
    EXPECT_LE(rep.final_error, 1.0 / 16);
    EXPECT_TRUE(rep.ok());
  }
}

TEST(LogDepthConstruction, ShorterSequencesUseThePrefix) {
  const ModelInstance mi = make_model({ModelKind::cyclic_det, 4, 3, 4});
  const auto c = build_tf_theorem2(mi, 16);
  const Trajectory tr = rollout(mi, 5, 2);
  EXPECT_TRUE(verify_construction(c, tr.obs).ok());
}

TEST(LogDepthConstruction, BeliefChannelReachesTheStartRow) {
  const ModelInstance mi = make_model({ModelKind::cyclic_det, 5, 5, 0});
  Tf2Options opt;
  opt.belief_channel = true;
  const auto c = build_tf_theorem2(mi, 8, opt);
  EXPECT_EQ(c.params.L, 4);
  const auto fn = train::construction_block_fn(c);
  for (int s = 0; s < 5; ++s) {
    const Vector b = one_hot(5, s);
    const Trajectory tr = rollout(mi, 8, 6, TargetKind::belief, static_cast<std::uint64_t>(s));
    const Matrix y = fn(tr.obs, b);
    LinearSystem sys = linear_system(mi);
    sys.s0 = b;
    const auto want = linear_states(sys, tr.obs);
    for (int t = 0; t < 8; ++t) EXPECT_LE((y.row(t).transpose() - want[static_cast<std::size_t>(t)]).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_TRUE(verify_construction(c, tr.obs, &b).ok());
  }
}

TEST(LogDepthConstruction, OversizedModelHitsCapacity) {
  LinearSystem sys;
  sys.n = 60;
  sys.m = 1;
  sys.A = {Matrix::Identity(60, 60)};
  sys.s0 = one_hot(60, 0);
  EXPECT_THROW(build_tf_theorem2(sys, 8), CapacityError);
}

TEST(NormalizationMlp, ClampValues) {
  EXPECT_EQ(clamp_unit(-1.0), 0.0);
  EXPECT_EQ(clamp_unit(0.5), 0.5);
  EXPECT_EQ(clamp_unit(2.0), 1.0);
}

TEST(NormalizationMlp, NormalizedInputIsAFixedPoint) {
  const auto w = build_norm_mlp_theorem3(3, 8, 0.01);
  Vector b(3);
  b << 0.2, 0.5, 0.3;
  EXPECT_LE((w.apply(b) - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(NormalizationMlp, RandomPositiveVectorsAreNormalized) {
  const int n = 3, T = 8;
  const double c_l = 0.01;
  const auto w = build_norm_mlp_theorem3(n, T, c_l);
  Stream r(17, 0);
  const double lo = std::pow(c_l, T);
  for (int rep = 0; rep < 200; ++rep) {
    Vector b(n);
    for (int i = 0; i < n; ++i) b(i) = std::exp(std::log(lo) * r.uniform());
    EXPECT_LE((w.apply(b) - b / b.sum()).cwiseAbs().maxCoeff(), 1e-4) << "mass " << b.sum();
  }
}

TEST(NormalizationMlp, RejectsBadLowerBound) {
  EXPECT_THROW(build_norm_mlp_theorem3(3, 8, 0.0), ParameterError);
  EXPECT_THROW(build_norm_mlp_theorem3(3, 8, 1.0), ParameterError);
}

TEST(NormalizationMlp, PipelineTracksTheFilter) {
  ModelInstance mi;
  mi.body = gen_hmm(3, 3, 2, 0.1);
  const auto p = build_stochastic_pipeline(mi.hmm(), 8);
  for (int i = 0; i < 5; ++i) {
    const Trajectory tr = rollout(mi, 8, 3, TargetKind::belief, static_cast<std::uint64_t>(i));
    const auto got = run_stochastic_pipeline(p, tr.obs);
    for (std::size_t t = 0; t < got.size(); ++t) EXPECT_LE((got[t] - tr.targets[t]).cwiseAbs().maxCoeff(), 1e-4);
  }
}
