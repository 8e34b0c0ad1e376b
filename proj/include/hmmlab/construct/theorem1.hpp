#pragma once

#include "hmmlab/construct/linear_system.hpp"
#include "hmmlab/nn/rnn.hpp"

namespace hmmlab::construct {

struct RnnConstruction {
  nn::RnnWeights weights;
  double alpha = 0.0;
};

// Hidden state is m blocks of n. Block i's pre-activation is
// A_i hbar + alpha/2 when o_t = i and A_i hbar - alpha/2 otherwise, where
// hbar = sum of blocks - alpha/2 is the tracked state. With alpha = 4 |s0|
// the selected block stays positive and the others are zeroed by the ReLU.
inline RnnConstruction build_rnn_theorem1(const LinearSystem& sys) {
  if (!sys.normalized) throw UnsupportedModelError("the RNN construction needs a norm-preserving recursion");
  const int n = sys.n;
  const int m = sys.m;
  const Eigen::Index d = static_cast<Eigen::Index>(n) * m;
  const double alpha = 4.0 * sys.s0.norm();
  require(alpha > 0.0, "initial state must be nonzero");
  nn::RnnWeights w = nn::RnnWeights::zeros(m, d, n);
  const Vector ones = Vector::Ones(n);
  for (int i = 0; i < m; ++i) {
    const Matrix& Ai = sys.A[static_cast<std::size_t>(i)];
    for (int o = 0; o < m; ++o) w.W2.block(i * n, o * n, n, n) = Ai;
    w.b.segment(i * n, n) = -Ai * (0.5 * alpha * ones) - 0.5 * alpha * ones;
    w.W1.block(i * n, i, n, 1) = alpha * ones;
    w.Wd.block(0, i * n, n, n) = Matrix::Identity(n, n);
  }
  w.h0.head(n) = sys.s0 + 0.5 * alpha * ones;
  w.bd = -0.5 * alpha * ones;
  return {std::move(w), alpha};
}

inline RnnConstruction build_rnn_theorem1(const ModelInstance& mi) { return build_rnn_theorem1(linear_system(mi)); }

inline Matrix one_hot_inputs(const std::vector<int>& obs, int m) {
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(obs.size()), m);
  for (std::size_t t = 0; t < obs.size(); ++t) x(static_cast<Eigen::Index>(t), obs[t]) = 1.0;
  return x;
}

}  // namespace hmmlab::construct
