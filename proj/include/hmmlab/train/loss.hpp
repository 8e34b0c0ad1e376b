#pragma once

#include "hmmlab/core.hpp"
#include "hmmlab/models.hpp"
#include "hmmlab/nn/ops.hpp"

#include <cmath>
#include <string>

namespace hmmlab::train {

enum class LossKind { mse, cross_entropy };

inline const char* to_string(LossKind k) { return k == LossKind::mse ? "mse" : "cross_entropy"; }

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "cross_entropy" || s == "ce") return LossKind::cross_entropy;
  throw ParameterError("unknown loss kind '" + s + "'");
}

// Squared error for the unnormalized families, cross-entropy otherwise.
inline LossKind loss_for(ModelKind k) {
  return k == ModelKind::matmul || k == ModelKind::lds ? LossKind::mse : LossKind::cross_entropy;
}

struct LossResult {
  double value = 0.0;
  Matrix grad;  // d loss / d raw output
};

// Mean over positions. MSE averages the squared error over output entries;
// cross-entropy treats each output row as logits against a target
// distribution.
inline LossResult loss_and_grad(const Matrix& out, const Matrix& target, LossKind kind) {
  require_shape(out.rows() == target.rows() && out.cols() == target.cols(), "loss: output and target shapes differ");
  require_shape(out.rows() >= 1, "loss: empty sequence");
  LossResult r;
  const auto T = static_cast<double>(out.rows());
  if (kind == LossKind::mse) {
    const Matrix diff = out - target;
    const double denom = T * static_cast<double>(out.cols());
    r.value = diff.squaredNorm() / denom;
    r.grad = 2.0 * diff / denom;
  } else {
    r.grad.resize(out.rows(), out.cols());
    for (Eigen::Index t = 0; t < out.rows(); ++t) {
      const RowVector z = out.row(t);
      const double mx = z.maxCoeff();
      const double lse = mx + std::log((z.array() - mx).exp().sum());
      r.value -= (target.row(t).array() * (z.array() - lse)).sum();
      const RowVector p = (z.array() - lse).exp().matrix();
      r.grad.row(t) = (p * target.row(t).sum() - target.row(t)) / T;
    }
    r.value /= T;
  }
  if (!std::isfinite(r.value)) throw DivergenceError("non-finite training loss");
  return r;
}

// Network output to prediction: softmax rows for distribution tasks.
inline Matrix to_prediction(const Matrix& out, LossKind kind) {
  return kind == LossKind::cross_entropy ? nn::softmax_rows(out) : out;
}

}  // namespace hmmlab::train
