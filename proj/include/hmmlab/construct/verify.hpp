#pragma once

#include "hmmlab/construct/theorem1.hpp"
#include "hmmlab/construct/theorem2.hpp"

#include <cmath>
#include <vector>

namespace hmmlab::construct {

struct ConstructionReport {
  std::vector<double> per_layer_error;  // eps_l for l = 0..L
  std::vector<double> bound;            // (8n)^(l-L) / T
  std::vector<double> attention_one_hot_gap;  // layers 1..L
  double final_error = 0.0;
  double final_bound = 0.0;
  double eta = 0.0;
  bool layers_ok = true;
  bool attention_ok = true;
  bool final_ok = true;

  bool ok() const { return layers_ok && attention_ok && final_ok; }
};

// Runs the construction on one observation sequence and compares every layer
// against the exact products.
inline ConstructionReport verify_construction(const Tf2Construction& c, const std::vector<int>& obs,
                                              const Vector* belief = nullptr) {
  const auto& p = c.params;
  const Matrix x = augment_input(obs, p.T, c.system.m, belief, c.system.n);
  const nn::TransformerTrace tr = nn::transformer_trace(c.weights, x);
  ConstructionReport rep;
  rep.eta = p.eta;
  for (int l = 0; l <= p.L; ++l) {
    const auto got = read_lambda(c.layout, tr.states[static_cast<std::size_t>(l)]);
    const auto want = exact_lambda(c.system, obs, l, belief);
    double err = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) err = std::max(err, linf_gap(got[i], want[i]));
    rep.per_layer_error.push_back(err);
    rep.bound.push_back(std::pow(8.0 * p.n, l - p.L) / p.T);
    if (!(err <= rep.bound.back())) rep.layers_ok = false;
  }
  for (int l = 1; l <= p.L; ++l) {
    const Matrix& att = tr.attention[static_cast<std::size_t>(l - 1)][0];
    const long shift = 1L << (l - 1);
    double gap = 0.0;
    for (Eigen::Index i = 0; i < att.rows(); ++i) {
      const Eigen::Index target = std::max<Eigen::Index>(i - shift, 0);
      RowVector e = RowVector::Zero(att.cols());
      e(target) = 1.0;
      gap = std::max(gap, (att.row(i) - e).lpNorm<1>());
    }
    rep.attention_one_hot_gap.push_back(gap);
    if (!(gap <= p.eta)) rep.attention_ok = false;
  }
  Vector start = belief ? *belief : c.system.s0;
  LinearSystem sys = c.system;
  sys.s0 = start;
  const auto oracle = linear_states(sys, obs);
  for (std::size_t t = 0; t < oracle.size(); ++t)
    rep.final_error =
        std::max(rep.final_error, linf_gap(tr.output.row(static_cast<Eigen::Index>(t + 1)).transpose(), oracle[t]));
  rep.final_bound = 1.0 / p.T;
  rep.final_ok = rep.final_error <= rep.final_bound;
  return rep;
}

struct RnnReport {
  double final_error = 0.0;
  double gate_margin = 0.0;  // most negative non-selected pre-activation must be < 0
  bool ok = false;
};

inline RnnReport verify_rnn(const RnnConstruction& c, const LinearSystem& sys, const std::vector<int>& obs,
                            double tol = 1e-9) {
  const Matrix x = one_hot_inputs(obs, sys.m);
  const nn::RnnTrace tr = nn::rnn_forward_trace(c.weights, x);
  const auto oracle = linear_states(sys, obs);
  RnnReport rep;
  rep.gate_margin = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < obs.size(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    rep.final_error = std::max(rep.final_error, linf_gap(tr.output.row(ti).transpose(), oracle[t]));
    for (int i = 0; i < sys.m; ++i) {
      if (i == obs[t]) continue;
      rep.gate_margin = std::max(rep.gate_margin, tr.pre.row(ti).segment(i * sys.n, sys.n).maxCoeff());
    }
  }
  rep.ok = rep.final_error <= tol && (obs.empty() || sys.m == 1 || rep.gate_margin < 0.0);
  return rep;
}

}  // namespace hmmlab::construct
