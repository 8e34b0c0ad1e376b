#pragma once

#include "hmmlab/rollout.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace hmmlab::eval {

// p = 1: half the l1 distance. p = 2: l2 distance, divided by
// max(1, |target|_2) when relative.
inline double eval_loss_step(const Vector& pred, const Vector& target, int p, bool relative = false) {
  require_shape(pred.size() == target.size(), "evaluation loss: dimension mismatch");
  if (p == 1) return 0.5 * (pred - target).lpNorm<1>();
  if (p == 2) {
    const double d = (pred - target).norm();
    return relative ? d / std::max(1.0, target.norm()) : d;
  }
  throw ParameterError("evaluation norm must be 1 or 2");
}

struct LossNorm {
  int p = 1;
  bool relative = false;
};

inline LossNorm loss_norm_for(ModelKind k) {
  if (k == ModelKind::lds) return {2, true};
  if (k == ModelKind::matmul) return {2, false};
  return {1, false};
}

enum class MaskKind { all, prediction_stage };

inline const char* to_string(MaskKind k) { return k == MaskKind::all ? "all" : "prediction_stage"; }

inline MaskKind mask_kind_from_string(const std::string& s) {
  if (s == "all") return MaskKind::all;
  if (s == "prediction_stage" || s == "prediction-stage" || s == "prediction") return MaskKind::prediction_stage;
  throw ParameterError("unknown mask kind '" + s + "'");
}

inline MaskKind default_mask(ModelKind k) { return k == ModelKind::cyclic_hard ? MaskKind::prediction_stage : MaskKind::all; }

inline bool absent(double x) { return std::isnan(x); }

// Largest t with every defined loss at steps 1..t below eps. Absent (NaN)
// steps neither break nor extend the prefix on their own.
inline int fit_length(const std::vector<double>& losses, double eps) {
  if (!(eps > 0.0)) throw ParameterError("fit-length threshold must be positive");
  for (std::size_t t = 0; t < losses.size(); ++t)
    if (!absent(losses[t]) && !(losses[t] < eps)) return static_cast<int>(t);
  return static_cast<int>(losses.size());
}

struct EvalReport {
  std::vector<double> per_step_loss;  // NaN where no rollout defines the step
  std::vector<double> sum;
  std::vector<long> count;
  int E = 0;
  int T = 0;
  MaskKind mask = MaskKind::all;
  LossNorm norm;
  std::vector<double> eps_list{0.05, 0.1};
  std::map<double, int> fit_lengths;
  std::string fit_rule = "prefix";

  void finalize() {
    per_step_loss.assign(sum.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0; t < sum.size(); ++t)
      if (count[t] > 0) per_step_loss[t] = sum[t] / static_cast<double>(count[t]);
    fit_lengths.clear();
    for (double e : eps_list) fit_lengths[e] = fit_length(per_step_loss, e);
  }

  // Mean loss at a 1-based step, NaN when absent.
  double at(int step) const { return per_step_loss.at(static_cast<std::size_t>(step - 1)); }
};

// Predictions for one trajectory, one row per step.
using Predictor = std::function<Matrix(const Trajectory&)>;

inline Predictor oracle_predictor() {
  return [](const Trajectory& tr) {
    Matrix out(static_cast<Eigen::Index>(tr.length()), tr.targets.front().size());
    for (std::size_t t = 0; t < tr.length(); ++t) out.row(static_cast<Eigen::Index>(t)) = tr.targets[t].transpose();
    return out;
  };
}

// E fresh trajectories from streams (seed, first_index + i).
inline EvalReport eval_rollouts(const Predictor& predictor, const ModelInstance& model, int E, int T, std::uint64_t seed,
                                MaskKind mask, std::uint64_t first_index = 0) {
  require(E >= 1 && T >= 1, "evaluation needs E >= 1 and T >= 1");
  const TargetKind kind = default_target(model.kind);
  if (mask == MaskKind::prediction_stage && model.kind != ModelKind::cyclic_hard)
    throw TaskError("prediction-stage mask is only defined for cyclic_hard");
  EvalReport r;
  r.E = E;
  r.T = T;
  r.mask = mask;
  r.norm = loss_norm_for(model.kind);
  r.sum.assign(static_cast<std::size_t>(T), 0.0);
  r.count.assign(static_cast<std::size_t>(T), 0);
  for (int i = 0; i < E; ++i) {
    const Trajectory tr = rollout(model, T, seed, kind, first_index + static_cast<std::uint64_t>(i));
    const Matrix pred = predictor(tr);
    require_shape(pred.rows() == T && pred.cols() == tr.targets.front().size(), "predictor returned the wrong shape");
    const std::vector<char> keep =
        mask == MaskKind::prediction_stage ? prediction_stage_mask(model, tr) : std::vector<char>(static_cast<std::size_t>(T), 1);
    for (int t = 0; t < T; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      if (!keep[ts]) continue;
      r.sum[ts] += eval_loss_step(pred.row(t).transpose(), tr.targets[ts], r.norm.p, r.norm.relative);
      ++r.count[ts];
    }
  }
  r.finalize();
  return r;
}

// Pools two reports over disjoint rollouts of the same configuration.
inline EvalReport merge(const EvalReport& a, const EvalReport& b) {
  require(a.T == b.T && a.mask == b.mask, "only reports with matching configuration can be merged");
  EvalReport r = a;
  r.E = a.E + b.E;
  for (std::size_t t = 0; t < r.sum.size(); ++t) {
    r.sum[t] += b.sum[t];
    r.count[t] += b.count[t];
  }
  r.finalize();
  return r;
}

}  // namespace hmmlab::eval
