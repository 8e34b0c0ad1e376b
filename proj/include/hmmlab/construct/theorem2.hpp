#pragma once

#include "hmmlab/construct/linear_system.hpp"
#include "hmmlab/construct/product_mlp.hpp"
#include "hmmlab/nn/transformer.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace hmmlab::construct {

struct ConstructionParams {
  int T = 0;
  int n = 0;
  int L = 0;
  double gamma = 0.0;
  double eta = 0.0;
  double lambda = 0.0;
  double relu_sim_scale = 1.0;
  double alpha_rnn = 0.0;
  double mlp_eps = 0.0;
  double grid_error = 0.0;
  Eigen::Index mlp_width = 0;
  // With a belief channel the start row carries the belief, so every
  // position's product must reach it: T observations plus one row.
  bool reach_start = false;

  static int depth_for(int T, bool reach_start) { return ceil_log2(reach_start ? T + 1 : T); }

  void validate() const {
    require(T >= 2 && n >= 1, "construction needs T >= 2 and n >= 1");
    require(L == depth_for(T, reach_start), "depth does not match the horizon");
    require(gamma > 0.0 && eta > 0.0 && lambda > 0.0 && relu_sim_scale > 0.0, "construction constants must be positive");
  }
};

// Residual-stream layout of the log-depth construction.
struct Tf2Layout {
  int n = 0;
  int nn() const { return n * n; }
  Eigen::Index dim() const { return 2 * nn() + 6; }
  Eigen::Index scratch(int r, int c) const { return r * n + c; }
  Eigen::Index zeros_begin() const { return nn(); }
  Eigen::Index lam(int r, int c) const { return nn() + 3 + r * n + c; }
  Eigen::Index lam_begin() const { return nn() + 3; }
  Eigen::Index sin_col() const { return 2 * nn() + 3; }
  Eigen::Index cos_col() const { return 2 * nn() + 4; }
  Eigen::Index one_col() const { return 2 * nn() + 5; }
};

// Input row layout: one-hot over m observations plus a start token at index
// m, then (sin, cos, 1), then an optional n-wide belief channel.
struct Tf2Input {
  int m = 0;
  int n = 0;
  bool belief_channel = false;
  Eigen::Index bos() const { return m; }
  Eigen::Index sin_col() const { return m + 1; }
  Eigen::Index cos_col() const { return m + 2; }
  Eigen::Index one_col() const { return m + 3; }
  Eigen::Index belief(int r) const { return m + 4 + r; }
  Eigen::Index dim() const { return m + 4 + (belief_channel ? n : 0); }
};

inline double pe_angle(int i, int T) { return std::numbers::pi * i / (4.0 * T); }

// (T'+1) rows for T' = obs.size() <= T: start token then observations, each
// with (sin, cos, 1) of angle pi*i/(4T).
inline Matrix augment_input(const std::vector<int>& obs, int T, int m, const Vector* belief = nullptr, int n = 0) {
  require(T >= 1 && static_cast<int>(obs.size()) <= T, "augment_input needs obs.size() <= T");
  const Tf2Input in{m, n, belief != nullptr};
  const auto rows = static_cast<Eigen::Index>(obs.size()) + 1;
  Matrix x = Matrix::Zero(rows, in.dim());
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (i == 0) {
      x(0, in.bos()) = 1.0;
    } else {
      const int o = obs[static_cast<std::size_t>(i - 1)];
      require(o >= 0 && o < m, "observation index out of range");
      x(i, o) = 1.0;
    }
    const double a = pe_angle(static_cast<int>(i), T);
    x(i, in.sin_col()) = std::sin(a);
    x(i, in.cos_col()) = std::cos(a);
    x(i, in.one_col()) = 1.0;
  }
  if (belief) {
    require_shape(belief->size() == n, "belief channel width mismatch");
    for (int r = 0; r < n; ++r) x(0, in.belief(r)) = (*belief)(r);
  }
  return x;
}

inline double tf2_eta_deterministic(int n, int T, int L) {
  return 1.0 / (std::pow(8.0 * n, L + 1) * T);
}

inline double tf2_eta_stochastic(int n, int T, int L) {
  return std::max(1.0 / (std::pow(8.0 * n, L + 1) * std::exp(4.0 * T)), 1e-300);
}

inline double tf2_gamma(int T, double eta) {
  return 4.0 * std::numbers::sqrt2 * T * std::log(2.0 * T / eta) / std::numbers::pi;
}

struct Tf2Options {
  bool belief_channel = false;
  double magnitude_cap = 1e12;
  double mlp_eps = 0.0;  // 0 selects the default budget
  bool stochastic = false;
};

struct Tf2Construction {
  nn::TransformerWeights weights;
  ConstructionParams params;
  MatmulMlpInfo mlp;
  Tf2Layout layout;
  Tf2Input input;
  LinearSystem system;
};

inline double max_abs_weight(const nn::TransformerWeights& w) {
  double mx = 0.0;
  w.visit([&mx](const std::string&, const auto& m) {
    if (m.size() > 0) mx = std::max(mx, m.cwiseAbs().maxCoeff());
  });
  return mx;
}

inline Tf2Construction build_tf_theorem2(const LinearSystem& sys, int T, const Tf2Options& opt = {}) {
  require(T >= 2, "the log-depth construction needs T >= 2");
  const int n = sys.n;
  const int m = sys.m;
  const Tf2Layout lay{n};
  const Tf2Input in{m, n, opt.belief_channel};
  const Eigen::Index width = 4 * static_cast<Eigen::Index>(n) * n * n + 2 * static_cast<Eigen::Index>(n) * n;
  if (static_cast<double>(width) * static_cast<double>(lay.dim()) > 5e7)
    throw CapacityError("construction MLP of width " + std::to_string(width) + " exceeds the desk memory budget");

  ConstructionParams p;
  p.T = T;
  p.n = n;
  p.reach_start = opt.belief_channel;
  p.L = ConstructionParams::depth_for(T, p.reach_start);
  p.eta = opt.stochastic ? tf2_eta_stochastic(n, T, p.L) : tf2_eta_deterministic(n, T, p.L);
  p.gamma = tf2_gamma(T, p.eta);
  p.mlp_eps = opt.mlp_eps > 0.0 ? opt.mlp_eps : std::pow(8.0 * n, 1 - p.L) / (4.0 * T);

  nn::TransformerConfig cfg;
  cfg.in_dim = static_cast<int>(in.dim());
  cfg.d = static_cast<int>(lay.dim());
  cfg.heads = 2;
  cfg.layers = p.L;
  cfg.width = static_cast<int>(width);
  cfg.out_dim = n;
  cfg.act = nn::Activation::gelu;
  cfg.pre_ln = false;
  cfg.final_ln = false;
  cfg.learned_pe = false;
  cfg.residual_attn = true;
  cfg.residual_mlp = true;
  cfg.dropout = 0.0;
  nn::TransformerWeights w = nn::TransformerWeights::zeros(cfg);

  for (int o = 0; o < m; ++o)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) w.enc_W(o, lay.lam(r, c)) = sys.A[static_cast<std::size_t>(o)](r, c);
  if (opt.belief_channel) {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) w.enc_W(in.belief(r), lay.lam(r, c)) = 1.0;
  } else {
    for (int r = 0; r < n; ++r) w.enc_W(in.bos(), lay.lam(r, r)) = 1.0;
  }
  w.enc_W(in.sin_col(), lay.sin_col()) = 1.0;
  w.enc_W(in.cos_col(), lay.cos_col()) = 1.0;
  w.enc_W(in.one_col(), lay.one_col()) = 1.0;

  const MatmulLayout mlay{n, lay.dim(), 0, lay.lam_begin(), lay.one_col()};
  MatmulMlpInfo info;
  const Ffn mlp = build_matmul_mlp(mlay, 2.0, p.mlp_eps, ProductSide::right, &info, p.relu_sim_scale);
  p.lambda = info.product.lambda;
  p.grid_error = info.product.grid_error;
  p.mlp_width = info.width;

  for (int l = 1; l <= p.L; ++l) {
    auto& layer = w.layers[static_cast<std::size_t>(l - 1)];
    const double theta = std::numbers::pi * std::ldexp(1.0, l - 1) / (4.0 * T);
    const double g = p.gamma;
    Matrix& Wq = layer.Wq[0];
    Matrix& Wk = layer.Wk[0];
    Wq(lay.sin_col(), 0) = g * std::cos(theta);
    Wq(lay.sin_col(), 1) = g * std::sin(theta);
    Wq(lay.cos_col(), 0) = -g * std::sin(theta);
    Wq(lay.cos_col(), 1) = g * std::cos(theta);
    Wk(lay.sin_col(), 0) = g;
    Wk(lay.cos_col(), 1) = g;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) layer.Wv[0](lay.lam(r, c), r * n + c) = 1.0;
    layer.Wo = Matrix::Identity(cfg.d, cfg.d);
    layer.Wa = mlp.Wa;
    layer.Wb = mlp.Wb;
  }

  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) w.dec_W(lay.lam(r, c), r) = sys.s0(c);

  const double biggest = max_abs_weight(w);
  if (!(biggest <= opt.magnitude_cap))
    throw CapacityError("construction weight magnitude " + std::to_string(biggest) + " exceeds the cap");
  p.validate();
  return {std::move(w), p, info, lay, in, sys};
}

inline Tf2Construction build_tf_theorem2(const ModelInstance& mi, int T, const Tf2Options& opt = {}) {
  return build_tf_theorem2(linear_system(mi), T, opt);
}

// Reads Lambda at every position from a residual-stream state.
inline std::vector<Matrix> read_lambda(const Tf2Layout& lay, const Matrix& state) {
  std::vector<Matrix> out;
  for (Eigen::Index i = 0; i < state.rows(); ++i) {
    Matrix M(lay.n, lay.n);
    for (int r = 0; r < lay.n; ++r)
      for (int c = 0; c < lay.n; ++c) M(r, c) = state(i, lay.lam(r, c));
    out.push_back(std::move(M));
  }
  return out;
}

// Exact Lambda_{i,l} = A_{o_i} ... A_{o_{i - 2^l + 1}} with the start token as identity (or b 1^T).
inline std::vector<Matrix> exact_lambda(const LinearSystem& sys, const std::vector<int>& obs, int l, const Vector* belief = nullptr) {
  const int n = sys.n;
  const Matrix base = belief ? Matrix(*belief * RowVector::Ones(n)) : Matrix(Matrix::Identity(n, n));
  std::vector<Matrix> out;
  out.push_back(base);
  const long span = 1L << l;
  for (std::size_t i = 1; i <= obs.size(); ++i) {
    Matrix M = Matrix::Identity(n, n);
    const long lo = static_cast<long>(i) - span + 1;
    for (long k = lo < 1 ? 1 : lo; k <= static_cast<long>(i); ++k)
      M = sys.A[static_cast<std::size_t>(obs[static_cast<std::size_t>(k - 1)])] * M;
    if (lo < 1) M = M * base;
    out.push_back(std::move(M));
  }
  return out;
}

}  // namespace hmmlab::construct
