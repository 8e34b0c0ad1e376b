#pragma once

#include "hmmlab/core.hpp"
#include "hmmlab/models.hpp"

#include <cstdint>
#include <vector>

namespace hmmlab {

// Bayes filter step: diag(O(o|.)) P b, renormalized.
inline Vector belief_update(const HmmInstance& h, const Vector& b, int o, std::size_t step = 0) {
  require_shape(b.size() == h.n, "belief has wrong dimension");
  require(o >= 0 && o < h.m, "observation index out of range");
  Vector u = h.O.row(o).transpose().cwiseProduct(h.P * b);
  const double z = u.sum();
  if (!(z > 0.0)) throw ImpossibleObservation(step, o);
  return u / z;
}

inline std::vector<Vector> belief_sequence(const HmmInstance& h, const std::vector<int>& obs) {
  std::vector<Vector> out;
  out.reserve(obs.size());
  Vector b = one_hot(h.n, h.s0);
  for (std::size_t t = 0; t < obs.size(); ++t) {
    b = belief_update(h, b, obs[t], t);
    out.push_back(b);
  }
  return out;
}

inline Vector next_obs_dist(const HmmInstance& h, const Vector& b) {
  require_shape(b.size() == h.n, "belief has wrong dimension");
  return h.O * (h.P * b);
}

// Independent oracle: for every prefix length t, enumerate all hidden paths
// s_1..s_t, weight them by their joint probability with o_1..o_t and read off
// the marginal of s_t.
inline std::vector<Vector> brute_force_posterior(const HmmInstance& h, const std::vector<int>& obs) {
  const std::size_t T = obs.size();
  double count = 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    count *= h.n;
    if (count > 1e7) throw CapacityError("brute-force posterior limited to n^T <= 1e7 paths");
  }
  std::vector<Vector> out;
  std::vector<int> path;
  for (std::size_t t = 1; t <= T; ++t) {
    Vector marg = Vector::Zero(h.n);
    path.assign(t, 0);
    while (true) {
      double p = 1.0;
      int prev = h.s0;
      for (std::size_t k = 0; k < t && p > 0.0; ++k) {
        p *= h.P(path[k], prev) * h.O(obs[k], path[k]);
        prev = path[k];
      }
      marg(path[t - 1]) += p;
      std::size_t k = 0;
      while (k < t && ++path[k] == h.n) path[k++] = 0;
      if (k == t) break;
    }
    const double z = marg.sum();
    if (!(z > 0.0)) throw ImpossibleObservation(t - 1, obs[t - 1]);
    out.push_back(marg / z);
  }
  return out;
}

inline std::vector<Vector> matmul_sequence(const MatMulInstance& mm, const std::vector<int>& obs) {
  std::vector<Vector> out;
  out.reserve(obs.size());
  Vector b = mm.b0;
  for (int o : obs) {
    require(o >= 0 && o < mm.m, "observation index out of range");
    b = mm.A[static_cast<std::size_t>(o)] * b;
    out.push_back(b);
  }
  return out;
}

inline std::vector<int> det_state_sequence(const CyclicDetInstance& c, const std::vector<int>& actions) {
  std::vector<int> out;
  out.reserve(actions.size());
  int s = c.s0;
  for (int a : actions) {
    require(a >= 0 && a < c.m, "action index out of range");
    s = c.perms[static_cast<std::size_t>(a)][static_cast<std::size_t>(s)];
    out.push_back(s);
  }
  return out;
}

inline std::vector<Vector> det_belief_sequence(const CyclicDetInstance& c, const std::vector<int>& actions) {
  std::vector<Vector> out;
  for (int s : det_state_sequence(c, actions)) out.push_back(one_hot(c.n, s));
  return out;
}

// Kalman predictive means for x_t = A x_{t-1} + noise, y_t = B x_t + noise
// with x_0 known. Entry k is E[y_{k+1} | y_1..y_k]; there are ys.size() + 1.
inline std::vector<Vector> kalman_predictive_means(const LdsInstance& l, const std::vector<Vector>& ys) {
  const Eigen::Index n = l.n;
  const Matrix I = Matrix::Identity(n, n);
  const double q = l.sigma_state * l.sigma_state;
  const double r = l.sigma_obs * l.sigma_obs;
  Vector x = l.x0;
  Matrix S = Matrix::Zero(n, n);
  std::vector<Vector> out;
  out.reserve(ys.size() + 1);
  for (std::size_t t = 0;; ++t) {
    const Vector xp = l.A * x;
    const Matrix Sp = l.A * S * l.A.transpose() + q * I;
    out.push_back(l.B * xp);
    if (t == ys.size()) break;
    const Vector& y = ys[t];
    require_shape(y.size() == n, "LDS observation has wrong dimension");
    if (!y.allFinite()) throw NumericError("non-finite LDS observation at step " + std::to_string(t));
    const Matrix innov = l.B * Sp * l.B.transpose() + r * I;
    // K = Sp B^T innov^{-1}, computed as a solve against the symmetric innovation covariance.
    const Matrix K = innov.completeOrthogonalDecomposition().solve(l.B * Sp).transpose();
    x = xp + K * (y - l.B * xp);
    S = (I - K * l.B) * Sp;
    S = 0.5 * (S + S.transpose());
  }
  return out;
}

}  // namespace hmmlab
