#include "hmmlab/train/backward.hpp"
#include "hmmlab/train/trainer.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hmmlab;
using namespace hmmlab::train;

namespace {

Matrix random_distributions(Stream& r, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) m.row(i) = dirichlet_flat(r, cols).transpose();
  return m;
}

nn::TransformerConfig tiny_tf(bool pre_ln, nn::Activation act, double dropout) {
  nn::TransformerConfig c;
  c.in_dim = 3;
  c.out_dim = 3;
  c.d = 8;
  c.heads = 2;
  c.layers = 2;
  c.width = 12;
  c.max_len = 8;
  c.pre_ln = pre_ln;
  c.final_ln = pre_ln;
  c.act = act;
  c.dropout = dropout;
  return c;
}

double transformer_gradcheck(const nn::TransformerConfig& cfg, LossKind kind, const nn::ForwardOptions& fo) {
  nn::TransformerWeights w = nn::init_transformer(cfg, 21);
  testkit::jitter(w, 22, 0.2);
  Stream r(23, 0);
  const Matrix x = gaussian_matrix(r, 6, cfg.in_dim);
  const Matrix y = kind == LossKind::mse ? gaussian_matrix(r, 6, cfg.out_dim) : random_distributions(r, 6, cfg.out_dim);
  const auto step = backward(w, x, y, kind, fo);
  return testkit::gradcheck(
      w, [&](const nn::TransformerWeights& v) { return loss_and_grad(nn::transformer_forward(v, x, fo), y, kind).value; },
      step.grad);
}

ModelInstance small_cyclic() { return make_model({ModelKind::cyclic_det, 3, 3, 2}); }

TrainConfig quick_config(int epochs) {
  TrainConfig cfg;
  cfg.net.kind = NetKind::rnn;
  cfg.net.rnn_hidden = 16;
  cfg.plan = flat_plan(8, epochs);
  cfg.batch = 16;
  cfg.seed = 3;
  cfg.schedule.warmup_steps = 10;
  cfg.schedule.base = 1e-2;
  cfg.eval_E = 16;
  return cfg;
}

}  // namespace

TEST(Gradients, RnnMse) {
  nn::RnnWeights w = nn::init_rnn(3, 6, 2, 4);
  testkit::jitter(w, 5, 0.2);
  Stream r(6, 0);
  const Matrix x = gaussian_matrix(r, 7, 3), y = gaussian_matrix(r, 7, 2);
  const auto step = backward(w, x, y, LossKind::mse);
  const double worst = testkit::gradcheck(
      w, [&](const nn::RnnWeights& v) { return loss_and_grad(nn::rnn_forward(v, x).output, y, LossKind::mse).value; },
      step.grad);
  EXPECT_LE(worst, 1e-4);
}

TEST(Gradients, RnnCrossEntropy) {
  nn::RnnWeights w = nn::init_rnn(3, 6, 4, 4);
  testkit::jitter(w, 7, 0.2);
  Stream r(8, 0);
  const Matrix x = gaussian_matrix(r, 7, 3), y = random_distributions(r, 7, 4);
  const auto step = backward(w, x, y, LossKind::cross_entropy);
  const double worst = testkit::gradcheck(
      w,
      [&](const nn::RnnWeights& v) {
        return loss_and_grad(nn::rnn_forward(v, x).output, y, LossKind::cross_entropy).value;
      },
      step.grad);
  EXPECT_LE(worst, 1e-4);
}

TEST(Gradients, TransformerWithLayerNorm) {
  EXPECT_LE(transformer_gradcheck(tiny_tf(true, nn::Activation::gelu, 0.0), LossKind::mse, {}), 1e-4);
  EXPECT_LE(transformer_gradcheck(tiny_tf(true, nn::Activation::gelu, 0.0), LossKind::cross_entropy, {}), 1e-4);
}

TEST(Gradients, TransformerWithoutLayerNormRelu) {
  EXPECT_LE(transformer_gradcheck(tiny_tf(false, nn::Activation::relu, 0.0), LossKind::mse, {}), 1e-4);
}

TEST(Gradients, TransformerWithFixedDropoutMasks) {
  nn::ForwardOptions fo;
  fo.mode = nn::Mode::train;
  fo.seed = 99;
  EXPECT_LE(transformer_gradcheck(tiny_tf(true, nn::Activation::gelu, 0.2), LossKind::cross_entropy, fo), 1e-4);
}

TEST(Loss, ZeroTargetAndZeroOutput) {
  const auto r = loss_and_grad(Matrix::Zero(4, 3), Matrix::Zero(4, 3), LossKind::mse);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.grad, Matrix::Zero(4, 3));
}

TEST(Loss, UniformLogitsGiveLogTwo) {
  Matrix target(1, 2);
  target << 1.0, 0.0;
  EXPECT_NEAR(loss_and_grad(Matrix::Zero(1, 2), target, LossKind::cross_entropy).value, std::log(2.0), 1e-15);
}

TEST(Loss, NonFiniteOutputIsDivergence) {
  Matrix out = Matrix::Zero(2, 2);
  out(1, 1) = std::nan("");
  EXPECT_THROW(loss_and_grad(out, Matrix::Zero(2, 2), LossKind::mse), DivergenceError);
}

TEST(AdamW, ZeroGradientAndDecayLeaveParamsUnchanged) {
  AdamWConfig c;
  c.weight_decay = 0.0;
  OptimizerState st = OptimizerState::for_params(5, c);
  Vector p = Vector::LinSpaced(5, -1.0, 1.0);
  const Vector before = p;
  for (int i = 0; i < 10; ++i) adamw_step(p, Vector::Zero(5), st, 1e-2);
  EXPECT_EQ(p, before);
}

TEST(AdamW, QuadraticDecreases) {
  OptimizerState st = OptimizerState::for_params(3);
  Vector p(3);
  p << 2.0, -1.5, 0.5;
  double prev = p.squaredNorm();
  for (int i = 0; i < 200; ++i) {
    adamw_step(p, 2.0 * p, st, 1e-2);
    const double cur = p.squaredNorm();
    EXPECT_LE(cur, prev);
    prev = cur;
  }
  EXPECT_LT(prev, 0.5);
}

TEST(Schedule, WarmupAndStepDecay) {
  EXPECT_DOUBLE_EQ(lr_at(0, 0), 1e-7);
  EXPECT_NEAR(lr_at(2000, 0), 5.0005e-4, 1e-15);
  EXPECT_DOUBLE_EQ(lr_at(4000, 0), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(10000, 19), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(10000, 25), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(10000, 45), 2.5e-4);
}

TEST(Curriculum, StagesForCommonDepths) {
  const auto p6 = curriculum_plan(6, 120, 100);
  EXPECT_EQ(p6.lengths, (std::vector<int>{64, 120}));
  EXPECT_EQ(p6.epochs, (std::vector<int>{50, 50}));
  const auto p7 = curriculum_plan(7, 120, 30);
  EXPECT_EQ(p7.lengths, (std::vector<int>{120}));
  EXPECT_EQ(p7.epochs, (std::vector<int>{30}));
  const auto p5 = curriculum_plan(5, 120, 30);
  EXPECT_EQ(p5.lengths, (std::vector<int>{32, 64, 120}));
  EXPECT_EQ(p5.total_epochs(), 30);
}

TEST(Curriculum, CappedStagesMergeAndRemainderGoesLast) {
  const auto p = curriculum_plan(2, 10, 13);
  EXPECT_EQ(p.lengths, (std::vector<int>{4, 8, 10}));
  EXPECT_EQ(p.epochs, (std::vector<int>{2, 2, 9}));
  EXPECT_EQ(p.length_at(0), 4);
  EXPECT_EQ(p.length_at(12), 10);
  EXPECT_THROW(curriculum_plan(0, 10, 5), ParameterError);
  EXPECT_THROW(curriculum_plan(8, 10, 5), ParameterError);
}

TEST(BlockCot, ForwardPassCount) {
  int calls = 0;
  const BlockFn fn = [&calls](const std::vector<int>& block, const Vector& b) {
    ++calls;
    return Matrix(Matrix::Constant(static_cast<Eigen::Index>(block.size()), b.size(), 0.25));
  };
  const std::vector<int> obs(60, 0);
  const auto r = block_cot_forward(fn, obs, {12, Feedback::predicted, false}, Vector::Constant(4, 0.25));
  EXPECT_EQ(r.forward_passes, 5);
  EXPECT_EQ(calls, 5);
  EXPECT_EQ(block_cot_forward(fn, std::vector<int>(61, 0), {12, Feedback::predicted, false}, Vector::Constant(4, 0.25))
                .forward_passes,
            6);
}

TEST(BlockCot, WholeSequenceBlockIsAPlainForward) {
  const ModelInstance mi = small_cyclic();
  NetConfig nc;
  nc.kind = NetKind::rnn;
  nc.rnn_hidden = 8;
  nc.belief_channel = true;
  const Network net = init_network(nc, mi, 10);
  const Trajectory tr = rollout(mi, 10, 4);
  const Vector init = initial_belief(mi);
  const auto r = block_cot_forward(network_block_fn(net), tr.obs, {10, Feedback::predicted, false}, init);
  EXPECT_EQ(r.forward_passes, 1);
  EXPECT_EQ(r.predictions, net.predict(encode_obs(net.enc, tr.obs, &init)));
}

TEST(BlockCot, TeacherForcedSingleStepsOnAnOracle) {
  const ModelInstance mi = make_model({ModelKind::hmm, 3, 3, 2});
  const Trajectory tr = rollout(mi, 9, 5);
  const HmmInstance& h = mi.hmm();
  const BlockFn oracle = [&h](const std::vector<int>& block, const Vector& b) {
    Vector cur = b;
    Matrix out(static_cast<Eigen::Index>(block.size()), b.size());
    for (std::size_t i = 0; i < block.size(); ++i) {
      cur = belief_update(h, cur, block[i]);
      out.row(static_cast<Eigen::Index>(i)) = cur.transpose();
    }
    return out;
  };
  const auto r = block_cot_forward(oracle, tr.obs, {1, Feedback::teacher_forced, false}, initial_belief(mi), &tr.targets);
  for (int t = 0; t < 9; ++t)
    EXPECT_LE((r.predictions.row(t).transpose() - tr.targets[static_cast<std::size_t>(t)]).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(block_cot_forward(oracle, tr.obs, {1, Feedback::teacher_forced, false}, initial_belief(mi)), Error);
}

TEST(BlockCot, SnapToOneHot) {
  Vector v(3);
  v << 0.2, 0.5, 0.3;
  EXPECT_EQ(snap_to_onehot(v), one_hot(3, 1));
}

TEST(CostModel, Values) {
  EXPECT_EQ(block_cot_cost(60, 60), 3600.0);
  EXPECT_EQ(block_cot_cost(60, 1), 73810.0);
  EXPECT_EQ(block_cot_cost(60, 12), 7920.0);
  EXPECT_THROW(block_cot_cost(60, 0), Error);
}

TEST(CostModel, MonotoneOverDivisors) {
  for (int T : {12, 60, 120}) {
    double prev = 0.0;
    for (int b = T; b >= 1; --b) {
      if (T % b) continue;
      const double c = block_cot_cost(T, b);
      EXPECT_GT(c, prev) << "T=" << T << " b=" << b;
      prev = c;
    }
    EXPECT_EQ(block_cot_cost(T, T), static_cast<double>(T) * T);
  }
}

TEST(Trainer, ZeroEpochsReturnsTheInitialNet) {
  const ModelInstance mi = small_cyclic();
  const Dataset data = make_dataset(mi, 8, 32, 1);
  const TrainConfig cfg = quick_config(0);
  const TrainResult res = train_network(data, cfg);
  const Network init = init_network(cfg.net, mi, 8);
  EXPECT_EQ(std::get<nn::RnnWeights>(res.net.body).W1, std::get<nn::RnnWeights>(init.body).W1);
  EXPECT_EQ(std::get<nn::RnnWeights>(res.net.body).Wd, std::get<nn::RnnWeights>(init.body).Wd);
  EXPECT_TRUE(res.history.empty());
  EXPECT_EQ(res.steps, 0);
}

TEST(Trainer, FixedSeedsGiveBitwiseIdenticalLossTraces) {
  const Dataset data = make_dataset(small_cyclic(), 8, 64, 1);
  TrainConfig cfg = quick_config(3);
  cfg.net.kind = NetKind::transformer;
  cfg.net.tf.d = 8;
  cfg.net.tf.heads = 2;
  cfg.net.tf.layers = 1;
  cfg.net.tf.width = 16;
  cfg.net.tf.dropout = 0.1;
  const TrainResult a = train_network(data, cfg), b = train_network(data, cfg);
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].report.per_step_loss, b.history[i].report.per_step_loss);
  }
  cfg.seed = 4;
  EXPECT_NE(train_network(data, cfg).history.back().train_loss, a.history.back().train_loss);
}

TEST(Trainer, FiftyStepsHalveTheLossOnATinyBatch) {
  const ModelInstance mi = small_cyclic();
  const Dataset data = make_dataset(mi, 8, 8, 2);
  for (NetKind kind : {NetKind::rnn, NetKind::transformer}) {
    TrainConfig cfg = quick_config(50);
    cfg.batch = 8;
    cfg.eval_every = 0;
    cfg.net.kind = kind;
    cfg.net.rnn_hidden = 64;
    cfg.net.tf.d = 16;
    cfg.net.tf.heads = 2;
    cfg.net.tf.layers = 1;
    cfg.net.tf.width = 32;
    const TrainResult res = train_network(data, cfg);
    EXPECT_EQ(res.steps, 50);
    const Network init = init_network(cfg.net, mi, 8);
    const Vector b0 = initial_belief(mi);
    auto mean_loss = [&](const Network& net) {
      double s = 0.0;
      for (const auto& tr : data.trajectories)
        s += loss_and_grad(net.raw(encode_trajectory(net.enc, tr, 8, &b0)), stack_rows(tr.targets, 8), net.loss).value;
      return s / static_cast<double>(data.trajectories.size());
    };
    EXPECT_LE(mean_loss(res.net), 0.5 * mean_loss(init)) << to_string(kind);
  }
}

TEST(Trainer, StopsOnceTheWholeHorizonFits) {
  const Dataset data = make_dataset(small_cyclic(), 8, 128, 1);
  TrainConfig cfg = quick_config(40);
  cfg.net.rnn_hidden = 32;
  cfg.stop_eps = 0.05;
  const TrainResult res = train_network(data, cfg);
  EXPECT_TRUE(res.stopped_early);
  EXPECT_EQ(res.final_fit(0.05), 8);
  EXPECT_LT(res.history.size(), 40u);
}

TEST(Trainer, MetricsCsvHeader) {
  const std::string csv = metrics_csv({}, {1, 4, 8}, {0.05, 0.1});
  EXPECT_EQ(csv, "epoch,stage_length,lr,train_loss,el_1,el_4,el_8,fit_0.05,fit_0.1\n");
}
