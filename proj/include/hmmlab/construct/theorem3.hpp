#pragma once

#include "hmmlab/construct/dense_stack.hpp"
#include "hmmlab/construct/product_mlp.hpp"
#include "hmmlab/construct/theorem2.hpp"

#include <cmath>
#include <vector>

namespace hmmlab::construct {

// Clamp to [0, 1] written with two ReLUs.
inline double clamp_unit(double x) { return nn::relu(1.0 - nn::relu(1.0 - x)); }

struct NormStage {
  double upper = 0.0;  // bound on the l1 mass entering the stage
  double rho = 0.0;    // shrink factor applied when the mass is above threshold
  double theta = 0.0;
  double delta = 0.0;
};

struct NormMlpWeights {
  DenseStack phase1;
  DenseStack phase2;
  std::vector<NormStage> stages;
  int k = 0;
  double C_scale = 0.0;  // 1 / c_l
  double initial_upper = 0.0;
  double final_upper = 0.0;
  double final_lower = 0.0;
  ProductCalibration product;

  Vector apply(const Vector& b) const { return phase2.apply(phase1.apply(b)); }
};

struct NormMlpOptions {
  double target = 1e-6;    // series truncation budget
  double cell_eps = 1e-9;  // per-product budget
  double cell_bound = 1.5;
  double min_shrink = 1.0 / 1024.0;  // floor on the per-stage shrink factor
};

// Normalizes a positive vector whose l1 mass lies in [c_l^T, n].
//
// Phase 1 keeps z = b / U for a running upper bound U on the mass v and, per
// stage, multiplies z by 1 - (1 - rho) * clamp((v - theta) / delta): masses
// above theta + delta shrink by rho, masses below theta pass unchanged. The
// bound falls U -> rho U with rho = max(1 / sqrt(U), min_shrink) while U >= 4
// and U -> U / 2 after that, until U < 3/2. Each stage is four layers (ReLU,
// ReLU, GeLU product cells, linear). The shrink floor keeps the cancellation
// in z - (1 - rho) p z within reach of double precision.
//
// Phase 2 evaluates (2/3) b * sum_{j < 2^k} c^j with c = 1 - 2 |b|_1 / 3 by
// the doubling y <- y + y q, q <- q^2.
inline NormMlpWeights build_norm_mlp_theorem3(int n, int T, double c_l, const NormMlpOptions& opt = {}) {
  require(n >= 1 && T >= 1, "normalization MLP needs n >= 1 and T >= 1");
  if (!(c_l > 0.0 && c_l < 1.0)) throw ParameterError("entry lower bound c_l must lie in (0, 1)");
  NormMlpWeights w;
  w.C_scale = 1.0 / c_l;
  w.product = calibrate_product(opt.cell_bound, opt.cell_eps);
  const double lambda = w.product.lambda;
  const double U0 = n * std::pow(w.C_scale, T);
  if (!std::isfinite(U0)) throw ParameterError("C_l^T overflows double precision");
  w.initial_upper = U0;

  // Mass v_0 = C_l^T |b|_1 lies in [1, U0]; z_0 = C_l^T b / U0 = b / n.
  DenseLayer scale_in{Matrix::Identity(n, n) / n, Vector::Zero(n), nn::Activation::identity};
  w.phase1.layers.push_back(std::move(scale_in));
  double U = U0;
  double lower = 1.0;
  const double M = opt.cell_bound;
  const Eigen::Index stage_units = 8 * static_cast<Eigen::Index>(n);
  while (U >= 1.5) {
    NormStage st;
    st.upper = U;
    if (U >= 4.0) {
      st.rho = std::max(1.0 / std::sqrt(U), opt.min_shrink);
      st.theta = st.delta = st.rho * U / 2.0;
    } else {
      st.rho = 0.5;
      st.theta = st.delta = U / 4.0;
    }
    const double next = st.rho * U;
    lower = std::min({lower, st.theta, st.rho * (st.theta + st.delta)});
    w.stages.push_back(st);

    // Product operand K z is clipped at M; the excess e = ReLU(K z - M) is
    // only positive when the mass is past theta + delta, where p = 1, so it
    // goes through linearly.
    const double K = M * U / (st.theta + st.delta);
    // Layer 1: [z, e, r1 = ReLU(1 - (U sum z - theta) / delta)].
    DenseLayer l1{Matrix::Zero(2 * n + 1, n), Vector::Zero(2 * n + 1), nn::Activation::relu};
    l1.W.topRows(n) = Matrix::Identity(n, n);
    l1.W.middleRows(n, n) = K * Matrix::Identity(n, n);
    l1.b.segment(n, n).setConstant(-M);
    l1.W.row(2 * n).setConstant(-U / st.delta);
    l1.b(2 * n) = 1.0 + st.theta / st.delta;
    // Layer 2: [z, e, p = ReLU(1 - r1)].
    DenseLayer l2{Matrix::Identity(2 * n + 1, 2 * n + 1), Vector::Zero(2 * n + 1), nn::Activation::relu};
    l2.W(2 * n, 2 * n) = -1.0;
    l2.b(2 * n) = 1.0;
    // Layers 3-4: z' = r (z - (1 - rho) (p min(K z, M) + e) / K).
    Matrix Wa = Matrix::Zero(2 * n + 2, stage_units);  // last row is an unused constant slot
    Matrix Wb = Matrix::Zero(stage_units, n);
    CellWriter cw{Wa, Wb, lambda, 2 * n + 1};
    const double r = U / next;
    const double shrink = -(1.0 - st.rho) * r / K;
    Vector pf = Vector::Zero(2 * n + 2);
    pf(2 * n) = 1.0;
    for (int i = 0; i < n; ++i) {
      Vector cf = Vector::Zero(2 * n + 2);
      cf(i) = K;
      cf(n + i) = -1.0;
      cw.add_forms(4 * i, pf, cf, i, shrink);
      cw.add_linear(4 * static_cast<Eigen::Index>(n) + 2 * i, i, i, r, 1.0);
      cw.add_linear(6 * static_cast<Eigen::Index>(n) + 2 * i, n + i, i, shrink, 1.0);
    }
    DenseLayer l3{Wa.topRows(2 * n + 1).transpose(), Vector::Zero(stage_units), nn::Activation::gelu};
    DenseLayer l4{Wb.transpose(), Vector::Zero(n), nn::Activation::identity};
    w.phase1.layers.push_back(std::move(l1));
    w.phase1.layers.push_back(std::move(l2));
    w.phase1.layers.push_back(std::move(l3));
    w.phase1.layers.push_back(std::move(l4));
    U = next;
  }
  w.final_upper = U;
  w.final_lower = lower;

  int k = 0;
  while (6.0 * std::pow(5.0 / 6.0, std::ldexp(1.0, k)) > opt.target) ++k;
  w.k = k;

  // y = (2/3) U z, q = 1 - (2/3) U sum z; state [y (n), q].
  DenseLayer init{Matrix::Zero(n + 1, n), Vector::Zero(n + 1), nn::Activation::identity};
  init.W.topRows(n) = (2.0 / 3.0) * U * Matrix::Identity(n, n);
  init.W.row(n).setConstant(-(2.0 / 3.0) * U);
  init.b(n) = 1.0;
  w.phase2.layers.push_back(std::move(init));
  const Eigen::Index units = 6 * static_cast<Eigen::Index>(n) + 4;
  for (int step = 0; step < k; ++step) {
    Matrix Wa = Matrix::Zero(n + 2, units);
    Matrix Wb = Matrix::Zero(units, n + 1);
    CellWriter cw{Wa, Wb, lambda, n + 1};
    for (int i = 0; i < n; ++i) {
      cw.add(4 * i, i, 0.0, n, 0.0, i, 1.0);
      cw.add_linear(4 * static_cast<Eigen::Index>(n) + 2 * i, i, i, 1.0, 1.0);
    }
    cw.add(6 * static_cast<Eigen::Index>(n), n, 0.0, n, 0.0, n, 1.0);
    w.phase2.layers.push_back({Wa.topRows(n + 1).transpose(), Vector::Zero(units), nn::Activation::gelu});
    w.phase2.layers.push_back({Wb.transpose(), Vector::Zero(n + 1), nn::Activation::identity});
  }
  DenseLayer out{Matrix::Zero(n, n + 1), Vector::Zero(n), nn::Activation::identity};
  out.W.leftCols(n) = Matrix::Identity(n, n);
  w.phase2.layers.push_back(std::move(out));
  return w;
}

// Stochastic-HMM pipeline: the log-depth transformer computes the
// unnormalized belief A_{o_t} ... A_{o_1} e_{s0}; the MLP normalizes it.
struct StochasticPipeline {
  Tf2Construction tf;
  NormMlpWeights norm;
};

inline StochasticPipeline build_stochastic_pipeline(const HmmInstance& h, int T, double mlp_eps = 1e-6,
                                                    const NormMlpOptions& nopt = {}) {
  h.validate();
  const double min_entry = std::min(h.P.minCoeff(), h.O.minCoeff());
  require(min_entry > 0.0, "stochastic pipeline needs strictly positive transition and emission entries");
  Tf2Options opt;
  opt.stochastic = true;
  opt.mlp_eps = mlp_eps;
  StochasticPipeline p{build_tf_theorem2(linear_system_unnormalized(h), T, opt), {}};
  const double c_l = min_entry * min_entry;
  p.norm = build_norm_mlp_theorem3(h.n, T, c_l, nopt);
  return p;
}

inline std::vector<Vector> run_stochastic_pipeline(const StochasticPipeline& p, const std::vector<int>& obs) {
  const Matrix x = augment_input(obs, p.tf.params.T, p.tf.system.m);
  const Matrix y = nn::transformer_forward(p.tf.weights, x);
  std::vector<Vector> out;
  for (Eigen::Index i = 1; i < y.rows(); ++i) out.push_back(p.norm.apply(y.row(i).transpose()));
  return out;
}

}  // namespace hmmlab::construct
