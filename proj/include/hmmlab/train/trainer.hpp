#pragma once

#include "hmmlab/eval/metrics.hpp"
#include "hmmlab/train/backward.hpp"
#include "hmmlab/train/block_cot.hpp"
#include "hmmlab/train/curriculum.hpp"
#include "hmmlab/train/network.hpp"
#include "hmmlab/train/optim.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace hmmlab::train {

struct NetConfig {
  NetKind kind = NetKind::transformer;
  int rnn_hidden = 64;
  nn::TransformerConfig tf;  // in_dim / out_dim are filled from the data
  bool belief_channel = false;
  std::uint64_t init_seed = 1;
};

struct EpochMetrics;

struct TrainConfig {
  NetConfig net;
  CurriculumPlan plan;
  int batch = 64;
  std::uint64_t seed = 0;  // shuffling and dropout
  LrSchedule schedule;
  AdamWConfig adamw;
  double grad_clip = 0.0;  // 0 disables clipping
  int block = 0;           // > 0 trains with teacher-forced blocks of this length
  int eval_E = 256;
  std::uint64_t eval_seed = 0x6576616cULL;
  int eval_every = 1;  // 0 disables the per-epoch evaluation
  std::vector<int> probe_steps;
  std::vector<double> eps_list{0.05, 0.1};
  double stop_eps = 0.0;  // > 0 stops once the stop_eps-fit length reaches T
  std::function<bool(const EpochMetrics&)> stop_when;  // optional extra stopping rule
};

struct Dataset {
  ModelInstance model;
  std::vector<Trajectory> trajectories;

  int horizon() const { return trajectories.empty() ? 0 : static_cast<int>(trajectories.front().length()); }
};

inline Dataset make_dataset(const ModelInstance& model, int T, std::size_t count, std::uint64_t seed) {
  return {model, rollout_batch(model, T, seed, default_target(model.kind), count)};
}

struct EpochMetrics {
  int epoch = 0;
  int stage_length = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  bool evaluated = false;
  eval::EvalReport report;
};

struct TrainResult {
  Network net;
  std::vector<EpochMetrics> history;
  long steps = 0;
  bool diverged = false;
  bool stopped_early = false;
  std::string message;

  // Largest fit length seen over all evaluated epochs.
  int best_fit(double eps) const {
    int best = 0;
    for (const auto& h : history)
      if (h.evaluated) best = std::max(best, h.report.fit_lengths.at(eps));
    return best;
  }
  int final_fit(double eps) const {
    for (auto it = history.rbegin(); it != history.rend(); ++it)
      if (it->evaluated) return it->report.fit_lengths.at(eps);
    return 0;
  }
};

inline Network init_network(const NetConfig& nc, const ModelInstance& model, int T) {
  Network net;
  net.enc = encoding_for(model, nc.belief_channel);
  net.loss = loss_for(model.kind);
  const int out = model.target_dim(default_target(model.kind));
  if (nc.kind == NetKind::rnn) {
    require(nc.rnn_hidden >= 1, "RNN hidden size must be positive");
    net.body = nn::init_rnn(net.enc.dim(), nc.rnn_hidden, out, nc.init_seed);
  } else {
    nn::TransformerConfig cfg = nc.tf;
    cfg.in_dim = net.enc.dim();
    cfg.out_dim = out;
    cfg.max_len = std::max(cfg.max_len, T);
    net.body = nn::init_transformer(cfg, nc.init_seed);
  }
  return net;
}

// Predictions of a trained net over a whole trajectory, using predicted
// feedback every `block` steps when the net carries a belief channel.
inline eval::Predictor network_predictor(const Network& net, const ModelInstance& model, int block = 0) {
  const Vector init = initial_belief(model);
  return [&net, init, block](const Trajectory& tr) {
    if (block > 0 && net.enc.has_belief() && !tr.continuous()) {
      BlockCotConfig bc{std::min(block, static_cast<int>(tr.length())), Feedback::predicted, false};
      return block_cot_forward(network_block_fn(net), tr.obs, bc, init).predictions;
    }
    return net.predict(encode_trajectory(net.enc, tr, tr.length(), &init));
  };
}

inline std::vector<int> default_probes(int T) {
  std::vector<int> p{1, std::max(1, T / 2), T};
  if (T >= 10) p.push_back(10);
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());
  return p;
}

namespace detail {

// Loss and flattened gradient of one (possibly block-split) training sequence.
inline double example_gradient(const Network& net, const Trajectory& tr, std::size_t len, int block, const Vector& init,
                               std::uint64_t dropout_seed, Vector& grad_acc) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  if (block > 0) {
    for (std::size_t s = 0; s < len; s += static_cast<std::size_t>(block))
      spans.emplace_back(s, std::min(len, s + static_cast<std::size_t>(block)));
  } else {
    spans.emplace_back(0, len);
  }
  double loss = 0.0;
  for (const auto& [lo, hi] : spans) {
    // Teacher forcing: the block sees the true belief entering it, and no
    // gradient crosses the boundary.
    const Vector& entering = lo == 0 ? init : tr.targets[lo - 1];
    Matrix x;
    if (tr.continuous()) {
      x = encode_trajectory(net.enc, tr, len, &init);
    } else {
      const std::vector<int> obs(tr.obs.begin() + static_cast<long>(lo), tr.obs.begin() + static_cast<long>(hi));
      x = encode_obs(net.enc, obs, &entering);
    }
    Matrix y(static_cast<Eigen::Index>(hi - lo), tr.targets.front().size());
    for (std::size_t t = lo; t < hi; ++t) y.row(static_cast<Eigen::Index>(t - lo)) = tr.targets[t].transpose();
    const double weight = static_cast<double>(hi - lo) / static_cast<double>(len);
    if (net.kind() == NetKind::rnn) {
      RnnStep st = backward(net.rnn(), x, y, net.loss);
      loss += weight * st.loss;
      grad_acc += weight * flatten(st.grad);
    } else {
      nn::ForwardOptions fo;
      fo.mode = nn::Mode::train;
      fo.seed = stream_key(dropout_seed, lo);
      TransformerStep st = backward(net.transformer(), x, y, net.loss, fo);
      loss += weight * st.loss;
      grad_acc += weight * flatten(st.grad);
    }
  }
  return loss;
}

}  // namespace detail

using EpochHook = std::function<void(const EpochMetrics&)>;

// Deterministic given (dataset, config): shuffles with stream (seed, epoch),
// draws dropout masks from (seed, example counter).
inline TrainResult train_network(const Dataset& data, const TrainConfig& cfg, const EpochHook& hook = {}) {
  const int T = data.horizon();
  require(T >= 1 && !data.trajectories.empty(), "training needs a nonempty dataset");
  const TargetKind kind = default_target(data.model.kind);
  for (const auto& tr : data.trajectories)
    if (tr.kind != kind || static_cast<int>(tr.length()) != T)
      throw TaskError("dataset trajectories must share the model's task and horizon");
  cfg.plan.validate(T);
  require(cfg.batch >= 1, "batch size must be positive");
  if (cfg.block > 0) {
    require(cfg.net.belief_channel, "block training needs a belief channel");
    if (data.model.kind == ModelKind::lds) throw TaskError("block training is defined for discrete observations only");
  }

  TrainResult res;
  res.net = init_network(cfg.net, data.model, T);
  Vector params = std::visit([](const auto& w) { return flatten(w); }, res.net.body);
  OptimizerState opt = OptimizerState::for_params(params.size(), cfg.adamw);
  const Vector init = initial_belief(data.model);

  std::vector<std::size_t> order(data.trajectories.size());
  const int epochs = cfg.plan.total_epochs();
  std::uint64_t example_counter = 0;
  for (int epoch = 0; epoch < epochs && !res.diverged; ++epoch) {
    const auto len = static_cast<std::size_t>(cfg.plan.length_at(epoch));
    std::iota(order.begin(), order.end(), 0);
    Stream shuffle(cfg.seed, 0x73687566ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    EpochMetrics em;
    em.epoch = epoch;
    em.stage_length = static_cast<int>(len);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      Vector grad = Vector::Zero(params.size());
      double batch_loss = 0.0;
      try {
        for (std::size_t j = start; j < end; ++j)
          batch_loss += detail::example_gradient(res.net, data.trajectories[order[j]], len, cfg.block, init,
                                                 stream_key(cfg.seed, example_counter++), grad);
      } catch (const DivergenceError& e) {
        res.diverged = true;
        res.message = std::string("diverged at epoch ") + std::to_string(epoch) + ": " + e.what();
        break;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      batch_loss *= scale;
      grad *= scale;
      if (!std::isfinite(batch_loss) || !grad.allFinite()) {
        res.diverged = true;
        res.message = "diverged at epoch " + std::to_string(epoch) + ": non-finite loss or gradient";
        break;
      }
      if (cfg.grad_clip > 0.0) {
        const double gn = grad.norm();
        if (gn > cfg.grad_clip) grad *= cfg.grad_clip / gn;
      }
      em.lr = lr_at(res.steps, epoch, cfg.schedule);
      Vector next = params;
      adamw_step(next, grad, opt, em.lr);
      if (!next.allFinite()) {
        res.diverged = true;
        res.message = "diverged at epoch " + std::to_string(epoch) + ": non-finite parameters";
        break;
      }
      params = std::move(next);
      std::visit([&params](auto& w) { unflatten(w, params); }, res.net.body);
      ++res.steps;
      loss_sum += batch_loss;
      ++batches;
    }
    if (res.diverged) break;  // the net still holds the last good parameters
    em.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    const bool last = epoch + 1 == epochs;
    if (cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      em.report = eval::eval_rollouts(network_predictor(res.net, data.model, cfg.block), data.model, cfg.eval_E, T,
                                      cfg.eval_seed, eval::default_mask(data.model.kind));
      em.report.eps_list = cfg.eps_list;
      em.report.finalize();
      em.evaluated = true;
    }
    res.history.push_back(em);
    if (hook) hook(res.history.back());
    if ((cfg.stop_eps > 0.0 && em.evaluated && eval::fit_length(em.report.per_step_loss, cfg.stop_eps) == T) ||
        (cfg.stop_when && cfg.stop_when(em))) {
      res.stopped_early = true;
      break;
    }
  }
  return res;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// One row per epoch: epoch, stage length, lr, train loss, el at probe steps,
// fit lengths.
inline std::string metrics_csv(const std::vector<EpochMetrics>& history, const std::vector<int>& probes,
                               const std::vector<double>& eps_list) {
  std::string s = "epoch,stage_length,lr,train_loss";
  for (int p : probes) s += ",el_" + std::to_string(p);
  for (double e : eps_list) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ",fit_%g", e);
    s += buf;
  }
  s += "\n";
  for (const auto& h : history) {
    s += std::to_string(h.epoch) + "," + std::to_string(h.stage_length) + "," + format_double(h.lr) + "," +
         format_double(h.train_loss);
    for (int p : probes)
      s += "," + (h.evaluated && p >= 1 && p <= h.report.T ? format_double(h.report.at(p)) : std::string());
    for (double e : eps_list) s += "," + (h.evaluated ? std::to_string(h.report.fit_lengths.at(e)) : std::string());
    s += "\n";
  }
  return s;
}

}  // namespace hmmlab::train
