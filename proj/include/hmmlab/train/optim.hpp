#pragma once

#include "hmmlab/core.hpp"

#include <cmath>
#include <string>

namespace hmmlab::train {

// Concatenates every tensor reached by `visit` (column-major within a tensor).
template <typename Net>
Vector flatten(const Net& net) {
  Eigen::Index total = 0;
  net.visit([&total](const std::string&, const auto& m) { total += m.size(); });
  Vector out(total);
  Eigen::Index at = 0;
  net.visit([&](const std::string&, const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out(at + i) = m.data()[i];
    at += m.size();
  });
  return out;
}

template <typename Net>
void unflatten(Net& net, const Vector& flat) {
  Eigen::Index at = 0;
  net.visit([&](const std::string&, auto& m) {
    require_shape(at + m.size() <= flat.size(), "parameter vector too short");
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = flat(at + i);
    at += m.size();
  });
  require_shape(at == flat.size(), "parameter vector length mismatch");
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  AdamWConfig cfg;
  Vector m;
  Vector v;
  long step = 0;

  static OptimizerState for_params(Eigen::Index size, const AdamWConfig& cfg = {}) {
    return {cfg, Vector::Zero(size), Vector::Zero(size), 0};
  }
};

// Decoupled weight decay: theta <- theta - lr (wd theta + mhat / (sqrt(vhat) + eps)).
inline void adamw_step(Vector& params, const Vector& grads, OptimizerState& st, double lr) {
  require_shape(params.size() == grads.size() && st.m.size() == params.size() && st.v.size() == params.size(),
                "AdamW shapes differ");
  const auto& c = st.cfg;
  ++st.step;
  st.m = c.beta1 * st.m + (1.0 - c.beta1) * grads;
  st.v = c.beta2 * st.v + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  params *= 1.0 - lr * c.weight_decay;
  params.array() -= lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + c.eps);
}

struct LrSchedule {
  double start = 1e-7;
  double base = 1e-3;
  long warmup_steps = 4000;
  double decay = 0.5;
  int decay_every = 20;
};

// Linear warmup over optimizer steps, then step decay over epochs.
inline double lr_at(long step, int epoch, const LrSchedule& s = {}) {
  if (step < s.warmup_steps)
    return s.start + (s.base - s.start) * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  return s.base * std::pow(s.decay, static_cast<double>(epoch / s.decay_every));
}

inline double global_grad_norm(const Vector& g) { return g.norm(); }

}  // namespace hmmlab::train
