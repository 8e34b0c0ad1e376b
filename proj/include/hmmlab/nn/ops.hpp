#pragma once

#include "hmmlab/core.hpp"

#include <cfenv>
#include <cmath>
#include <limits>
#include <numbers>

namespace hmmlab::nn {

enum class Activation { gelu, relu, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::gelu: return "gelu";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "gelu") return Activation::gelu;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw FormatError("unknown activation '" + s + "'");
}

// Standard normal CDF.
inline double phi_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 * 0.5); }

inline double phi_pdf(double x) { return std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi * std::numbers::sqrt2 * 0.5); }

// Exact GeLU, x * Phi(x).
inline double gelu(double x) { return x * phi_cdf(x); }

inline double gelu_grad(double x) { return phi_cdf(x) + x * phi_pdf(x); }

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::gelu: return gelu(x);
    case Activation::relu: return relu(x);
    case Activation::identity: return x;
  }
  return x;
}

inline double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::gelu: return gelu_grad(x);
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

inline Matrix activate(Activation a, const Matrix& x) {
  return x.unaryExpr([a](double v) { return activate(a, v); });
}

inline Matrix activate_grad(Activation a, const Matrix& x) {
  return x.unaryExpr([a](double v) { return activate_grad(a, v); });
}

// Finite-precision hook: significands rounded to `mantissa_bits` fraction bits,
// ties to even.
struct PrecisionMode {
  bool enabled = false;
  int mantissa_bits = 52;

  void validate() const {
    if (enabled && (mantissa_bits < 1 || mantissa_bits > 52))
      throw ParameterError("mantissa_bits must lie in [1, 52]");
  }
};

inline double quantize(double x, const PrecisionMode& mode) {
  if (!mode.enabled || x == 0.0 || !std::isfinite(x)) return x;
  int e = 0;
  const double f = std::frexp(x, &e);  // |f| in [0.5, 1)
  const double scaled = std::ldexp(f, mode.mantissa_bits + 1);
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(scaled);
  std::fesetround(saved);
  return std::ldexp(r, e - mode.mantissa_bits - 1);
}

template <typename Derived>
void quantize_inplace(Eigen::MatrixBase<Derived>& m, const PrecisionMode& mode) {
  if (!mode.enabled) return;
  m = m.unaryExpr([&mode](double v) { return quantize(v, mode); });
}

inline bool all_neg_inf(const Eigen::Ref<const RowVector>& z) {
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (z(i) != -std::numeric_limits<double>::infinity()) return false;
  return true;
}

// Max-subtracted softmax; -inf entries get probability 0.
inline RowVector stable_softmax(const RowVector& z) {
  if (z.size() == 0 || all_neg_inf(z)) throw NumericError("softmax over an empty support");
  const double mx = z.maxCoeff();
  RowVector e = (z.array() - mx).exp().matrix();
  // Vectorized exp flushes -inf to a denormal rather than 0.
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (z(i) == -std::numeric_limits<double>::infinity()) e(i) = 0.0;
  return e / e.sum();
}

inline Vector stable_softmax(const Vector& z) { return stable_softmax(RowVector(z.transpose())).transpose(); }

inline Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = stable_softmax(RowVector(z.row(i)));
  return out;
}

inline RowVector hardmax(const Eigen::Ref<const RowVector>& z) {
  Eigen::Index arg = 0;
  z.maxCoeff(&arg);
  RowVector h = RowVector::Zero(z.size());
  h(arg) = 1.0;
  return h;
}

inline constexpr double kLayerNormEps = 1e-5;

// Row-wise layer norm. `xhat` and `inv_std` are the values the backward pass needs.
struct LayerNormCache {
  Matrix xhat;
  Vector inv_std;
};

inline Matrix layer_norm(const Matrix& x, const RowVector& gain, const RowVector& bias, LayerNormCache* cache = nullptr) {
  const Eigen::Index d = x.cols();
  Matrix xhat(x.rows(), d);
  Vector inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const RowVector c = x.row(i).array() - mean;
    const double var = c.squaredNorm() / static_cast<double>(d);
    inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = c * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

inline Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias) {
  return layer_norm(Matrix(x.transpose()), RowVector(gain.transpose()), RowVector(bias.transpose())).row(0).transpose();
}

}  // namespace hmmlab::nn
