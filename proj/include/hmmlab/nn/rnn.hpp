#pragma once

#include "hmmlab/core.hpp"
#include "hmmlab/nn/ops.hpp"
#include "hmmlab/rng.hpp"

#include <string>
#include <vector>

namespace hmmlab::nn {

// h_t = ReLU(W1 x_t + W2 h_{t-1} + b), y_t = Wd h_t + bd. Column vectors.
struct RnnWeights {
  Matrix W1;
  Matrix W2;
  Vector b;
  Vector h0;
  Matrix Wd;
  Vector bd;

  Eigen::Index hidden() const { return W2.rows(); }
  Eigen::Index input_dim() const { return W1.cols(); }
  Eigen::Index output_dim() const { return Wd.rows(); }

  void validate() const {
    const auto d = W2.rows();
    require_shape(W2.cols() == d && W1.rows() == d && b.size() == d && h0.size() == d && Wd.cols() == d &&
                      bd.size() == Wd.rows(),
                  "inconsistent RNN weight shapes");
    if (!W1.allFinite() || !W2.allFinite() || !b.allFinite() || !h0.allFinite() || !Wd.allFinite() || !bd.allFinite())
      throw ValidationError("RNN weights contain non-finite entries");
  }

  template <typename F>
  void visit(F&& f) {
    f("W1", W1);
    f("W2", W2);
    f("b", b);
    f("h0", h0);
    f("Wd", Wd);
    f("bd", bd);
  }
  template <typename F>
  void visit(F&& f) const {
    f("W1", W1);
    f("W2", W2);
    f("b", b);
    f("h0", h0);
    f("Wd", Wd);
    f("bd", bd);
  }

  static RnnWeights zeros(Eigen::Index in, Eigen::Index d, Eigen::Index out) {
    return {Matrix::Zero(d, in), Matrix::Zero(d, d), Vector::Zero(d), Vector::Zero(d), Matrix::Zero(out, d),
            Vector::Zero(out)};
  }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; h0 and biases start at zero.
inline RnnWeights init_rnn(Eigen::Index in, Eigen::Index d, Eigen::Index out, std::uint64_t seed) {
  Stream rng(seed, 0x524e4eULL);
  auto fill = [&rng](Matrix& m, double bound) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
  };
  RnnWeights w = RnnWeights::zeros(in, d, out);
  fill(w.W1, 1.0 / std::sqrt(static_cast<double>(in)));
  fill(w.W2, 1.0 / std::sqrt(static_cast<double>(d)));
  fill(w.Wd, 1.0 / std::sqrt(static_cast<double>(d)));
  return w;
}

struct RnnTrace {
  Matrix pre;     // T x d pre-activations
  Matrix hidden;  // T x d
  Matrix output;  // T x out
};

// inputs: T x in, one row per position.
inline RnnTrace rnn_forward_trace(const RnnWeights& w, const Matrix& inputs, const PrecisionMode& pm = {}) {
  require_shape(inputs.cols() == w.input_dim(), "RNN input dimension mismatch");
  const Eigen::Index T = inputs.rows();
  const Eigen::Index d = w.hidden();
  RnnTrace tr{Matrix(T, d), Matrix(T, d), Matrix(T, w.output_dim())};
  Vector h = w.h0;
  for (Eigen::Index t = 0; t < T; ++t) {
    Vector a = w.W1 * inputs.row(t).transpose();
    quantize_inplace(a, pm);
    Vector r = w.W2 * h;
    quantize_inplace(r, pm);
    a += r;
    quantize_inplace(a, pm);
    a += w.b;
    quantize_inplace(a, pm);
    tr.pre.row(t) = a.transpose();
    h = a.cwiseMax(0.0);
    tr.hidden.row(t) = h.transpose();
    Vector y = w.Wd * h;
    quantize_inplace(y, pm);
    y += w.bd;
    quantize_inplace(y, pm);
    tr.output.row(t) = y.transpose();
  }
  return tr;
}

struct RnnResult {
  Matrix hidden;
  Matrix output;
};

inline RnnResult rnn_forward(const RnnWeights& w, const Matrix& inputs, const PrecisionMode& pm = {}) {
  auto tr = rnn_forward_trace(w, inputs, pm);
  return {std::move(tr.hidden), std::move(tr.output)};
}

}  // namespace hmmlab::nn
