#pragma once

#include "hmmlab/nn/rnn.hpp"
#include "hmmlab/nn/transformer.hpp"
#include "hmmlab/train/loss.hpp"

#include <vector>

namespace hmmlab::train {

// Gradient of a row-wise layer norm given the forward cache.
inline Matrix layer_norm_backward(const Matrix& dy, const nn::LayerNormCache& c, const RowVector& gain, RowVector& dgain,
                                  RowVector& dbias) {
  const Eigen::Index d = dy.cols();
  dgain += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  Matrix dx(dy.rows(), d);
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const RowVector g = dy.row(i).cwiseProduct(gain);
    const double sg = g.sum();
    const double sgx = g.dot(c.xhat.row(i));
    dx.row(i) = (c.inv_std(i) / static_cast<double>(d)) *
                (static_cast<double>(d) * g.array() - sg - c.xhat.row(i).array() * sgx).matrix();
  }
  return dx;
}

// Backpropagation through time; dout is T x out.
inline nn::RnnWeights rnn_backward(const nn::RnnWeights& w, const Matrix& inputs, const nn::RnnTrace& tr, const Matrix& dout) {
  require_shape(dout.rows() == inputs.rows() && dout.cols() == w.output_dim(), "RNN backward: gradient shape");
  nn::RnnWeights g = nn::RnnWeights::zeros(w.input_dim(), w.hidden(), w.output_dim());
  const Eigen::Index T = inputs.rows();
  Vector carry = Vector::Zero(w.hidden());
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const Vector dy = dout.row(t).transpose();
    const Vector h = tr.hidden.row(t).transpose();
    g.Wd += dy * h.transpose();
    g.bd += dy;
    Vector dh = w.Wd.transpose() * dy + carry;
    Vector da = dh.array() * (tr.pre.row(t).transpose().array() > 0.0).cast<double>();
    const Vector prev = t > 0 ? Vector(tr.hidden.row(t - 1).transpose()) : w.h0;
    g.W1 += da * inputs.row(t);
    g.W2 += da * prev.transpose();
    g.b += da;
    carry = w.W2.transpose() * da;
  }
  g.h0 = carry;
  return g;
}

inline nn::TransformerWeights transformer_backward(const nn::TransformerWeights& w, const nn::ForwardCache& c,
                                                   const Matrix& dout) {
  const auto& cfg = w.cfg;
  require_shape(dout.rows() == c.output.rows() && dout.cols() == cfg.out_dim, "transformer backward: gradient shape");
  nn::TransformerWeights g = nn::TransformerWeights::zeros(cfg);
  g.lnf_g.setZero();
  for (auto& L : g.layers) {
    L.ln1_g.setZero();
    L.ln2_g.setZero();
  }
  const Eigen::Index T = dout.rows();
  const int dh = cfg.head_dim();

  g.dec_W = c.f.transpose() * dout;
  g.dec_b = dout.colwise().sum();
  Matrix dx = dout * w.dec_W.transpose();
  if (cfg.final_ln) dx = layer_norm_backward(dx, c.lnf, w.lnf_g, g.lnf_g, g.lnf_b);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto ls = static_cast<std::size_t>(l);
    const auto& L = w.layers[ls];
    auto& G = g.layers[ls];
    const auto& lc = c.layers[ls];

    // MLP sublayer.
    Matrix dmlp = lc.mlp_mask.size() > 0 ? Matrix(dx.cwiseProduct(lc.mlp_mask)) : dx;
    G.Wb = lc.hact.transpose() * dmlp;
    Matrix dh_pre = (dmlp * L.Wb.transpose()).cwiseProduct(nn::activate_grad(cfg.act, lc.hpre));
    G.Wa = lc.m_in.transpose() * dh_pre;
    Matrix dm_in = dh_pre * L.Wa.transpose();
    Matrix dx_mid = cfg.pre_ln ? layer_norm_backward(dm_in, lc.ln2, L.ln2_g, G.ln2_g, G.ln2_b) : dm_in;
    if (cfg.residual_mlp) dx_mid += dx;

    // Attention sublayer.
    Matrix dattn = lc.attn_mask.size() > 0 ? Matrix(dx_mid.cwiseProduct(lc.attn_mask)) : dx_mid;
    G.Wo = lc.zcat.transpose() * dattn;
    const Matrix dzcat = dattn * L.Wo.transpose();
    Matrix da_in = Matrix::Zero(T, cfg.d);
    for (int h = 0; h < cfg.heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      const Matrix dz = dzcat.middleCols(h * dh, dh);
      const Matrix& P = lc.probs[hs];
      const Matrix dP = dz * lc.v[hs].transpose();
      const Matrix dV = P.transpose() * dz;
      Matrix dS = P.cwiseProduct(dP);
      const Vector rows = dS.rowwise().sum();
      dS -= P.cwiseProduct(rows.replicate(1, P.cols()));
      const Matrix dQ = dS * lc.k[hs];
      const Matrix dK = dS.transpose() * lc.q[hs];
      G.Wq[hs] = lc.a_in.transpose() * dQ;
      G.Wk[hs] = lc.a_in.transpose() * dK;
      G.Wv[hs] = lc.a_in.transpose() * dV;
      da_in += dQ * L.Wq[hs].transpose() + dK * L.Wk[hs].transpose() + dV * L.Wv[hs].transpose();
    }
    Matrix dx_in = cfg.pre_ln ? layer_norm_backward(da_in, lc.ln1, L.ln1_g, G.ln1_g, G.ln1_b) : da_in;
    if (cfg.residual_attn) dx_in += dx_mid;
    dx = std::move(dx_in);
  }

  g.enc_W = c.input.transpose() * dx;
  g.enc_b = dx.colwise().sum();
  if (cfg.learned_pe) g.pe.topRows(T) = dx;
  return g;
}

struct RnnStep {
  double loss = 0.0;
  nn::RnnWeights grad;
  Matrix output;
};

inline RnnStep backward(const nn::RnnWeights& w, const Matrix& inputs, const Matrix& targets, LossKind kind) {
  const nn::RnnTrace tr = nn::rnn_forward_trace(w, inputs);
  const LossResult lr = loss_and_grad(tr.output, targets, kind);
  return {lr.value, rnn_backward(w, inputs, tr, lr.grad), tr.output};
}

struct TransformerStep {
  double loss = 0.0;
  nn::TransformerWeights grad;
  Matrix output;
};

// The dropout gradient reuses the masks drawn by the forward pass (same seed).
inline TransformerStep backward(const nn::TransformerWeights& w, const Matrix& inputs, const Matrix& targets, LossKind kind,
                                const nn::ForwardOptions& opt = {}) {
  nn::ForwardCache cache;
  nn::ForwardOptions fo = opt;
  fo.precision = {};
  const Matrix out = nn::transformer_forward(w, inputs, fo, &cache);
  const LossResult lr = loss_and_grad(out, targets, kind);
  return {lr.value, transformer_backward(w, cache, lr.grad), out};
}

}  // namespace hmmlab::train
