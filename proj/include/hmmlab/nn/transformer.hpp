#pragma once

#include "hmmlab/core.hpp"
#include "hmmlab/nn/ops.hpp"
#include "hmmlab/rng.hpp"

#include <limits>
#include <string>
#include <vector>

namespace hmmlab::nn {

struct TransformerConfig {
  int in_dim = 0;
  int d = 64;
  int heads = 2;
  int layers = 2;
  int width = 256;
  int out_dim = 0;
  int max_len = 256;
  Activation act = Activation::gelu;
  bool pre_ln = true;
  bool final_ln = true;
  bool learned_pe = true;
  bool residual_attn = true;
  bool residual_mlp = true;
  double dropout = 0.0;

  int head_dim() const { return d / heads; }

  void validate() const {
    require(in_dim >= 1 && out_dim >= 1, "transformer needs positive input and output dims");
    require(d >= 1 && heads >= 1 && d % heads == 0, "heads must divide the model width");
    require(layers >= 1, "transformer needs at least one layer");
    require(width >= 1, "MLP width must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    require(!learned_pe || max_len >= 1, "positional table needs at least one row");
  }
};

// Row convention: activations are T x d and weights multiply on the right.
struct TransformerLayer {
  std::vector<Matrix> Wq, Wk, Wv;  // each d x head_dim
  Matrix Wo;                       // (heads * head_dim) x d
  Matrix Wa;                       // d x width
  Matrix Wb;                       // width x d
  RowVector ln1_g, ln1_b, ln2_g, ln2_b;
};

struct TransformerWeights {
  TransformerConfig cfg;
  Matrix enc_W;  // in x d
  RowVector enc_b;
  Matrix pe;  // max_len x d, empty when learned_pe is off
  std::vector<TransformerLayer> layers;
  RowVector lnf_g, lnf_b;
  Matrix dec_W;  // d x out
  RowVector dec_b;

  void validate() const;

  // Visits every trainable tensor in a fixed order. LN and PE tensors are
  // skipped when their flag is off.
  template <typename Self, typename F>
  static void visit_impl(Self& self, F&& f) {
    f(std::string("enc_W"), self.enc_W);
    f(std::string("enc_b"), self.enc_b);
    if (self.cfg.learned_pe) f(std::string("pe"), self.pe);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& L = self.layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      for (std::size_t h = 0; h < L.Wq.size(); ++h) {
        const std::string hp = p + "head" + std::to_string(h) + ".";
        f(hp + "Wq", L.Wq[h]);
        f(hp + "Wk", L.Wk[h]);
        f(hp + "Wv", L.Wv[h]);
      }
      f(p + "Wo", L.Wo);
      f(p + "Wa", L.Wa);
      f(p + "Wb", L.Wb);
      if (self.cfg.pre_ln) {
        f(p + "ln1_g", L.ln1_g);
        f(p + "ln1_b", L.ln1_b);
        f(p + "ln2_g", L.ln2_g);
        f(p + "ln2_b", L.ln2_b);
      }
    }
    if (self.cfg.final_ln) {
      f(std::string("lnf_g"), self.lnf_g);
      f(std::string("lnf_b"), self.lnf_b);
    }
    f(std::string("dec_W"), self.dec_W);
    f(std::string("dec_b"), self.dec_b);
  }
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  static TransformerWeights zeros(const TransformerConfig& cfg);
};

inline TransformerWeights TransformerWeights::zeros(const TransformerConfig& cfg) {
  cfg.validate();
  TransformerWeights w;
  w.cfg = cfg;
  const int dh = cfg.head_dim();
  w.enc_W = Matrix::Zero(cfg.in_dim, cfg.d);
  w.enc_b = RowVector::Zero(cfg.d);
  if (cfg.learned_pe) w.pe = Matrix::Zero(cfg.max_len, cfg.d);
  for (int l = 0; l < cfg.layers; ++l) {
    TransformerLayer L;
    for (int h = 0; h < cfg.heads; ++h) {
      L.Wq.push_back(Matrix::Zero(cfg.d, dh));
      L.Wk.push_back(Matrix::Zero(cfg.d, dh));
      L.Wv.push_back(Matrix::Zero(cfg.d, dh));
    }
    L.Wo = Matrix::Zero(cfg.heads * dh, cfg.d);
    L.Wa = Matrix::Zero(cfg.d, cfg.width);
    L.Wb = Matrix::Zero(cfg.width, cfg.d);
    L.ln1_g = RowVector::Ones(cfg.d);
    L.ln1_b = RowVector::Zero(cfg.d);
    L.ln2_g = RowVector::Ones(cfg.d);
    L.ln2_b = RowVector::Zero(cfg.d);
    w.layers.push_back(std::move(L));
  }
  w.lnf_g = RowVector::Ones(cfg.d);
  w.lnf_b = RowVector::Zero(cfg.d);
  w.dec_W = Matrix::Zero(cfg.d, cfg.out_dim);
  w.dec_b = RowVector::Zero(cfg.out_dim);
  return w;
}

inline void TransformerWeights::validate() const {
  cfg.validate();
  const int dh = cfg.head_dim();
  require_shape(enc_W.rows() == cfg.in_dim && enc_W.cols() == cfg.d && enc_b.size() == cfg.d, "encoder shape");
  if (cfg.learned_pe) require_shape(pe.rows() == cfg.max_len && pe.cols() == cfg.d, "positional table shape");
  require_shape(static_cast<int>(layers.size()) == cfg.layers, "layer count");
  for (const auto& L : layers) {
    require_shape(static_cast<int>(L.Wq.size()) == cfg.heads && L.Wk.size() == L.Wq.size() && L.Wv.size() == L.Wq.size(),
                  "head count");
    for (int h = 0; h < cfg.heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      require_shape(L.Wq[hs].rows() == cfg.d && L.Wq[hs].cols() == dh && L.Wk[hs].rows() == cfg.d &&
                        L.Wk[hs].cols() == dh && L.Wv[hs].rows() == cfg.d && L.Wv[hs].cols() == dh,
                    "attention projection shape");
    }
    require_shape(L.Wo.rows() == cfg.heads * dh && L.Wo.cols() == cfg.d, "attention output shape");
    require_shape(L.Wa.rows() == cfg.d && L.Wa.cols() == cfg.width && L.Wb.rows() == cfg.width && L.Wb.cols() == cfg.d,
                  "MLP shape");
  }
  require_shape(dec_W.rows() == cfg.d && dec_W.cols() == cfg.out_dim && dec_b.size() == cfg.out_dim, "decoder shape");
  bool finite = true;
  visit([&finite](const std::string&, const auto& m) { finite = finite && m.allFinite(); });
  if (!finite) throw ValidationError("transformer weights contain non-finite entries");
}

// Normal(0, 0.02) init for projections (GPT-2 style), unit LN gains.
inline TransformerWeights init_transformer(const TransformerConfig& cfg, std::uint64_t seed) {
  TransformerWeights w = TransformerWeights::zeros(cfg);
  Stream rng(seed, 0x5446ULL);
  auto fill = [&rng](auto& m, double sd) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = sd * rng.normal();
  };
  const double sd = 0.02;
  fill(w.enc_W, 1.0 / std::sqrt(static_cast<double>(cfg.in_dim)));
  if (cfg.learned_pe) fill(w.pe, sd);
  for (auto& L : w.layers) {
    for (auto& m : L.Wq) fill(m, sd * 5);
    for (auto& m : L.Wk) fill(m, sd * 5);
    for (auto& m : L.Wv) fill(m, sd * 5);
    fill(L.Wo, sd * 5 / std::sqrt(2.0 * cfg.layers));
    fill(L.Wa, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
    fill(L.Wb, 1.0 / std::sqrt(static_cast<double>(cfg.width) * 2.0 * cfg.layers));
  }
  fill(w.dec_W, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
  return w;
}

enum class Mode { train, eval };

struct DropoutSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

// Inverted-dropout mask for (layer, site) with one substream per position.
inline Matrix dropout_mask(const DropoutSpec& ds, int layer, int site, Eigen::Index T, Eigen::Index d) {
  Matrix m(T, d);
  const double keep = 1.0 - ds.rate;
  const Stream base(ds.seed, static_cast<std::uint64_t>(layer) * 2 + static_cast<std::uint64_t>(site));
  for (Eigen::Index t = 0; t < T; ++t) {
    Stream s = base.split(static_cast<std::uint64_t>(t));
    for (Eigen::Index j = 0; j < d; ++j) m(t, j) = s.uniform() < keep ? 1.0 / keep : 0.0;
  }
  return m;
}

struct LayerCache {
  Matrix x_in;  // layer input
  Matrix a_in;  // attention input (after optional LN)
  LayerNormCache ln1;
  std::vector<Matrix> q, k, v, probs;
  Matrix zcat;  // T x (heads * head_dim)
  Matrix attn_mask;
  Matrix x_mid;  // after attention residual
  Matrix m_in;
  LayerNormCache ln2;
  Matrix hpre, hact;
  Matrix mlp_mask;
};

struct ForwardCache {
  Matrix input;
  Matrix x0;
  std::vector<LayerCache> layers;
  Matrix x_final;  // output of last block
  Matrix f;        // after optional final LN
  LayerNormCache lnf;
  Matrix output;
};

struct ForwardOptions {
  Mode mode = Mode::eval;
  std::uint64_t seed = 0;
  PrecisionMode precision{};
};

inline Matrix causal_logits(const Matrix& q, const Matrix& k) {
  Matrix s = q * k.transpose();
  const double ninf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = i + 1; j < s.cols(); ++j) s(i, j) = ninf;
  return s;
}

// Multi-head causal attention of one layer without LN, residual or dropout.
inline Matrix attention_forward(const TransformerLayer& L, const Matrix& x, std::vector<Matrix>* probs = nullptr) {
  const auto heads = static_cast<Eigen::Index>(L.Wq.size());
  require_shape(heads >= 1 && x.cols() == L.Wq[0].rows(), "attention input shape");
  const Eigen::Index dh = L.Wq[0].cols();
  require_shape(L.Wo.rows() == heads * dh, "attention output projection shape");
  Matrix zcat(x.rows(), heads * dh);
  if (probs) probs->clear();
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto hs = static_cast<std::size_t>(h);
    Matrix p = softmax_rows(causal_logits(x * L.Wq[hs], x * L.Wk[hs]));
    zcat.middleCols(h * dh, dh) = p * (x * L.Wv[hs]);
    if (probs) probs->push_back(std::move(p));
  }
  return zcat * L.Wo;
}

inline Matrix ffn_forward(const TransformerLayer& L, const Matrix& x, Activation act) {
  require_shape(x.cols() == L.Wa.rows() && L.Wa.cols() == L.Wb.rows(), "MLP input shape");
  return activate(act, x * L.Wa) * L.Wb;
}

// Full forward pass; fills `cache` (when given) with everything the backward
// pass consumes, including the per-layer states X^(l) and attention matrices.
inline Matrix transformer_forward(const TransformerWeights& w, const Matrix& inputs, const ForwardOptions& opt = {},
                                  ForwardCache* cache = nullptr) {
  const auto& cfg = w.cfg;
  require_shape(inputs.cols() == cfg.in_dim, "transformer input dimension mismatch");
  const Eigen::Index T = inputs.rows();
  if (cfg.learned_pe && T > cfg.max_len)
    throw ShapeError("sequence length " + std::to_string(T) + " exceeds positional table length " +
                     std::to_string(cfg.max_len));
  const auto& pm = opt.precision;
  const bool drop = opt.mode == Mode::train && cfg.dropout > 0.0;
  const DropoutSpec ds{cfg.dropout, opt.seed};
  const int dh = cfg.head_dim();

  Matrix x = (inputs * w.enc_W).rowwise() + w.enc_b;
  if (cfg.learned_pe) x += w.pe.topRows(T);
  quantize_inplace(x, pm);
  if (cache) {
    cache->input = inputs;
    cache->x0 = x;
    cache->layers.assign(static_cast<std::size_t>(cfg.layers), LayerCache{});
  }

  for (int l = 0; l < cfg.layers; ++l) {
    const auto& L = w.layers[static_cast<std::size_t>(l)];
    LayerCache local;
    LayerCache& c = cache ? cache->layers[static_cast<std::size_t>(l)] : local;
    c.x_in = x;
    c.a_in = cfg.pre_ln ? layer_norm(x, L.ln1_g, L.ln1_b, &c.ln1) : x;
    quantize_inplace(c.a_in, pm);
    c.zcat.resize(T, cfg.heads * dh);
    c.q.resize(static_cast<std::size_t>(cfg.heads));
    c.k.resize(c.q.size());
    c.v.resize(c.q.size());
    c.probs.resize(c.q.size());
    for (int h = 0; h < cfg.heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      c.q[hs] = c.a_in * L.Wq[hs];
      c.k[hs] = c.a_in * L.Wk[hs];
      c.v[hs] = c.a_in * L.Wv[hs];
      quantize_inplace(c.q[hs], pm);
      quantize_inplace(c.k[hs], pm);
      quantize_inplace(c.v[hs], pm);
      Matrix s = causal_logits(c.q[hs], c.k[hs]);
      quantize_inplace(s, pm);
      c.probs[hs] = softmax_rows(s);
      quantize_inplace(c.probs[hs], pm);
      Matrix z = c.probs[hs] * c.v[hs];
      quantize_inplace(z, pm);
      c.zcat.middleCols(h * dh, dh) = z;
    }
    Matrix attn = c.zcat * L.Wo;
    quantize_inplace(attn, pm);
    if (drop) {
      c.attn_mask = dropout_mask(ds, l, 0, T, cfg.d);
      attn = attn.cwiseProduct(c.attn_mask);
    }
    c.x_mid = cfg.residual_attn ? Matrix(x + attn) : attn;
    quantize_inplace(c.x_mid, pm);

    c.m_in = cfg.pre_ln ? layer_norm(c.x_mid, L.ln2_g, L.ln2_b, &c.ln2) : c.x_mid;
    quantize_inplace(c.m_in, pm);
    c.hpre = c.m_in * L.Wa;
    quantize_inplace(c.hpre, pm);
    c.hact = activate(cfg.act, c.hpre);
    quantize_inplace(c.hact, pm);
    Matrix mlp = c.hact * L.Wb;
    quantize_inplace(mlp, pm);
    if (drop) {
      c.mlp_mask = dropout_mask(ds, l, 1, T, cfg.d);
      mlp = mlp.cwiseProduct(c.mlp_mask);
    }
    x = cfg.residual_mlp ? Matrix(c.x_mid + mlp) : mlp;
    quantize_inplace(x, pm);
  }

  Matrix f = cfg.final_ln ? layer_norm(x, w.lnf_g, w.lnf_b, cache ? &cache->lnf : nullptr) : x;
  quantize_inplace(f, pm);
  Matrix out = (f * w.dec_W).rowwise() + w.dec_b;
  quantize_inplace(out, pm);
  if (cache) {
    cache->x_final = x;
    cache->f = f;
    cache->output = out;
  }
  return out;
}

// Per-layer residual stream X^(0..L) and attention matrices [layer][head].
struct TransformerTrace {
  std::vector<Matrix> states;
  std::vector<std::vector<Matrix>> attention;
  Matrix output;
};

inline TransformerTrace transformer_trace(const TransformerWeights& w, const Matrix& inputs, const ForwardOptions& opt = {}) {
  ForwardCache c;
  TransformerTrace tr;
  tr.output = transformer_forward(w, inputs, opt, &c);
  tr.states.push_back(c.x0);
  for (std::size_t l = 0; l < c.layers.size(); ++l) {
    tr.attention.push_back(c.layers[l].probs);
    tr.states.push_back(l + 1 < c.layers.size() ? c.layers[l + 1].x_in : c.x_final);
  }
  return tr;
}

}  // namespace hmmlab::nn
