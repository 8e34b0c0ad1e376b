#pragma once

#include "hmmlab/train/optim.hpp"
#include "hmmlab/rng.hpp"

#include <algorithm>
#include <cmath>

namespace hmmlab::testkit {

// Worst relative error between an analytic gradient and central differences.
// Entries where both are below `floor` in absolute terms count as agreeing.
template <typename Net, typename LossFn>
double gradcheck(Net w, const LossFn& loss, const Net& analytic, double h = 1e-5, double floor = 1e-9) {
  const Vector p = train::flatten(w);
  const Vector an = train::flatten(analytic);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Vector q = p;
    q(i) += h;
    train::unflatten(w, q);
    const double up = loss(w);
    q(i) -= 2.0 * h;
    train::unflatten(w, q);
    const double down = loss(w);
    const double num = (up - down) / (2.0 * h);
    const double diff = std::abs(num - an(i));
    if (diff < floor) continue;
    worst = std::max(worst, diff / std::max(std::abs(num), std::abs(an(i))));
  }
  return worst;
}

// Adds N(0, scale^2) noise to every parameter so zero-initialized pieces
// (biases, LN offsets) are exercised too.
template <typename Net>
void jitter(Net& w, std::uint64_t seed, double scale) {
  Stream r(seed, 0);
  w.visit([&](const std::string&, auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += scale * r.normal();
  });
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace hmmlab::testkit
