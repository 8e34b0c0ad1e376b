#pragma once

#include "hmmlab/filtering.hpp"
#include "hmmlab/models.hpp"
#include "hmmlab/rng.hpp"

#include <cstdint>
#include <vector>

namespace hmmlab {

// One sampled sequence. Discrete families fill obs/states; LDS fills
// obs_vec/states_vec; MatMul keeps its (deterministic given obs) state vectors
// in states_vec. targets[t] is the ground truth after seeing obs[0..t].
struct Trajectory {
  std::vector<int> obs;
  std::vector<Vector> obs_vec;
  std::vector<int> states;
  std::vector<Vector> states_vec;
  std::vector<Vector> targets;
  TargetKind kind = TargetKind::belief;

  std::size_t length() const { return targets.size(); }
  bool continuous() const { return !obs_vec.empty(); }
};

inline void check_target_kind(const ModelInstance& model, TargetKind kind) {
  const bool ok = [&] {
    switch (kind) {
      case TargetKind::belief: return model.kind != ModelKind::lds;
      case TargetKind::nextobs: return model.is_hmm();
      case TargetKind::kalman: return model.kind == ModelKind::lds;
    }
    return false;
  }();
  if (!ok)
    throw TaskError(std::string("target kind '") + to_string(kind) + "' is not defined for model '" +
                    to_string(model.kind) + "'");
}

// Ground-truth targets for a given observation sequence.
inline std::vector<Vector> compute_targets(const ModelInstance& model, const Trajectory& tr, TargetKind kind) {
  check_target_kind(model, kind);
  switch (model.kind) {
    case ModelKind::matmul: return matmul_sequence(model.matmul(), tr.obs);
    case ModelKind::cyclic_det: return det_belief_sequence(model.cyclic_det(), tr.obs);
    case ModelKind::lds: {
      auto means = kalman_predictive_means(model.lds(), tr.obs_vec);
      return std::vector<Vector>(means.begin() + 1, means.end());
    }
    default: {
      auto beliefs = belief_sequence(model.hmm(), tr.obs);
      if (kind == TargetKind::belief) return beliefs;
      for (auto& b : beliefs) b = next_obs_dist(model.hmm(), b);
      return beliefs;
    }
  }
}

inline Trajectory rollout(const ModelInstance& model, int T, Stream& rng, TargetKind kind) {
  require(T >= 1, "rollout length must be at least 1");
  check_target_kind(model, kind);
  Trajectory tr;
  tr.kind = kind;
  const auto len = static_cast<std::size_t>(T);
  switch (model.kind) {
    case ModelKind::matmul: {
      const auto& mm = model.matmul();
      for (std::size_t t = 0; t < len; ++t) tr.obs.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(mm.m))));
      tr.states_vec = matmul_sequence(mm, tr.obs);
      tr.targets = tr.states_vec;
      return tr;
    }
    case ModelKind::cyclic_det: {
      const auto& c = model.cyclic_det();
      for (std::size_t t = 0; t < len; ++t) tr.obs.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c.m))));
      tr.states = det_state_sequence(c, tr.obs);
      for (int s : tr.states) tr.targets.push_back(one_hot(c.n, s));
      return tr;
    }
    case ModelKind::lds: {
      const auto& l = model.lds();
      Vector x = l.x0;
      for (std::size_t t = 0; t < len; ++t) {
        Vector zs(l.n), zo(l.n);
        for (int i = 0; i < l.n; ++i) zs(i) = rng.normal();
        for (int i = 0; i < l.n; ++i) zo(i) = rng.normal();
        x = l.A * x + l.sigma_state * zs;
        tr.states_vec.push_back(x);
        tr.obs_vec.push_back(l.B * x + l.sigma_obs * zo);
      }
      tr.targets = compute_targets(model, tr, kind);
      return tr;
    }
    default: {
      const auto& h = model.hmm();
      int s = h.s0;
      for (std::size_t t = 0; t < len; ++t) {
        s = rng.categorical(h.P.col(s));
        tr.states.push_back(s);
        tr.obs.push_back(rng.categorical(h.O.col(s)));
      }
      tr.targets = compute_targets(model, tr, kind);
      return tr;
    }
  }
}

// Trajectory i of a dataset draws from stream (seed, i).
inline Trajectory rollout(const ModelInstance& model, int T, std::uint64_t seed, TargetKind kind, std::uint64_t index = 0) {
  Stream rng(seed, index);
  return rollout(model, T, rng, kind);
}

inline Trajectory rollout(const ModelInstance& model, int T, std::uint64_t seed) {
  return rollout(model, T, seed, default_target(model.kind));
}

inline std::vector<Trajectory> rollout_batch(const ModelInstance& model, int T, std::uint64_t seed, TargetKind kind,
                                             std::size_t count, std::uint64_t first_index = 0) {
  std::vector<Trajectory> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(rollout(model, T, seed, kind, first_index + i));
  return out;
}

// Steps whose next observation is the revealed state: the signal was just
// emitted. Other families count every step.
inline std::vector<char> prediction_stage_mask(const ModelInstance& model, const Trajectory& tr) {
  std::vector<char> mask(tr.length(), 1);
  if (model.kind != ModelKind::cyclic_hard) return mask;
  const HardAlphabet ab{model.base_n, model.base_m};
  for (std::size_t t = 0; t < tr.obs.size(); ++t) mask[t] = tr.obs[t] == ab.signal() ? 1 : 0;
  return mask;
}

}  // namespace hmmlab
