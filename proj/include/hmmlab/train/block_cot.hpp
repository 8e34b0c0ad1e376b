#pragma once

#include "hmmlab/construct/theorem2.hpp"
#include "hmmlab/train/network.hpp"

#include <functional>
#include <string>
#include <vector>

namespace hmmlab::train {

enum class Feedback { predicted, teacher_forced };

inline const char* to_string(Feedback f) { return f == Feedback::predicted ? "predicted" : "teacher_forced"; }

inline Feedback feedback_from_string(const std::string& s) {
  if (s == "predicted") return Feedback::predicted;
  if (s == "teacher_forced" || s == "teacher-forced") return Feedback::teacher_forced;
  throw ParameterError("unknown feedback mode '" + s + "'");
}

struct BlockCotConfig {
  int b = 1;
  Feedback feedback = Feedback::predicted;
  bool snap_onehot = false;

  void validate(int T) const {
    if (b < 1) throw ParameterError("block length must be at least 1");
    if (b > T) throw ParameterError("block length " + std::to_string(b) + " exceeds horizon " + std::to_string(T));
  }
};

// One forward pass over a block: observations plus the belief entering it,
// returning one predicted belief row per observation.
using BlockFn = std::function<Matrix(const std::vector<int>& block, const Vector& belief)>;

struct BlockCotResult {
  Matrix predictions;  // T x n
  int forward_passes = 0;
};

inline Vector snap_to_onehot(const Vector& v) {
  Eigen::Index arg = 0;
  v.maxCoeff(&arg);
  return one_hot(static_cast<int>(v.size()), static_cast<int>(arg));
}

// Runs ceil(T / b) passes. Block j starts from the previous block's last
// prediction, or from the ground-truth target at that step when teacher
// forced.
inline BlockCotResult block_cot_forward(const BlockFn& fn, const std::vector<int>& obs, const BlockCotConfig& cfg,
                                        const Vector& initial, const std::vector<Vector>* truth = nullptr) {
  const int T = static_cast<int>(obs.size());
  require(T >= 1, "block CoT needs a nonempty sequence");
  cfg.validate(T);
  if (cfg.feedback == Feedback::teacher_forced)
    require(truth && static_cast<int>(truth->size()) >= T, "teacher forcing needs ground-truth targets");
  BlockCotResult r;
  r.predictions.resize(T, initial.size());
  Vector belief = cfg.snap_onehot ? snap_to_onehot(initial) : initial;
  for (int start = 0; start < T; start += cfg.b) {
    const int end = std::min(T, start + cfg.b);
    const std::vector<int> block(obs.begin() + start, obs.begin() + end);
    const Matrix out = fn(block, belief);
    ++r.forward_passes;
    require_shape(out.rows() == end - start && out.cols() == initial.size(), "block predictor returned the wrong shape");
    r.predictions.middleRows(start, end - start) = out;
    Vector next = cfg.feedback == Feedback::teacher_forced ? (*truth)[static_cast<std::size_t>(end - 1)]
                                                           : Vector(out.row(out.rows() - 1).transpose());
    belief = cfg.snap_onehot ? snap_to_onehot(next) : next;
  }
  return r;
}

inline BlockFn network_block_fn(const Network& net) {
  if (!net.enc.has_belief()) throw ParameterError("block CoT needs a net with a belief channel");
  return [&net](const std::vector<int>& block, const Vector& belief) {
    return net.predict(encode_obs(net.enc, block, &belief));
  };
}

// The log-depth construction built with a belief channel.
inline BlockFn construction_block_fn(const construct::Tf2Construction& c) {
  if (!c.input.belief_channel) throw ParameterError("block CoT needs a construction with a belief channel");
  return [&c](const std::vector<int>& block, const Vector& belief) {
    const Matrix x = construct::augment_input(block, c.params.T, c.system.m, &belief, c.system.n);
    const Matrix y = nn::transformer_forward(c.weights, x);
    return Matrix(y.bottomRows(y.rows() - 1));
  };
}

// Training-cost model sum_{i=1}^{floor(T/b)} (i b)^2.
inline double block_cot_cost(int T, int b) {
  require(b >= 1 && b <= T, "cost model needs 1 <= b <= T");
  double s = 0.0;
  for (int i = 1; i <= T / b; ++i) s += static_cast<double>(i * b) * static_cast<double>(i * b);
  return s;
}

}  // namespace hmmlab::train
