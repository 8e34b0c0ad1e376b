#pragma once

#include "hmmlab/core.hpp"
#include "hmmlab/nn/ops.hpp"

#include <vector>

namespace hmmlab::construct {

// y = act(W x + b), column vectors.
struct DenseLayer {
  Matrix W;
  Vector b;
  nn::Activation act = nn::Activation::identity;
};

struct DenseStack {
  std::vector<DenseLayer> layers;

  Vector apply(Vector x) const {
    for (const auto& L : layers) {
      require_shape(L.W.cols() == x.size(), "dense stack input dimension mismatch");
      x = nn::activate(L.act, Matrix(L.W * x + L.b)).col(0);
    }
    return x;
  }

  Eigen::Index max_width() const {
    Eigen::Index w = 0;
    for (const auto& L : layers) w = std::max(w, L.W.rows());
    return w;
  }

  std::size_t depth() const { return layers.size(); }
};

}  // namespace hmmlab::construct
