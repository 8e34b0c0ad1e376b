#pragma once

#include "hmmlab/core.hpp"
#include "hmmlab/nn/ops.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace hmmlab::construct {

// Two-layer MLP act(X Wa) Wb acting on row vectors.
struct Ffn {
  Matrix Wa;
  Matrix Wb;
  nn::Activation act = nn::Activation::gelu;

  Matrix apply(const Matrix& x) const { return nn::activate(act, x * Wa) * Wb; }
  Eigen::Index width() const { return Wa.cols(); }
};

inline double product_cell_scale(double lambda) {
  return std::sqrt(2.0 * std::numbers::pi) * lambda * lambda / 8.0;
}

// f(a, b) ~ a*b from four GeLU units.
inline double product_cell(double a, double b, double lambda) {
  using nn::gelu;
  const double u = (a + b) / lambda;
  const double v = (a - b) / lambda;
  // Grouped so f(0, b) = 0 and f(a, b) = f(b, a) hold bitwise.
  return product_cell_scale(lambda) * ((gelu(u) + gelu(-u)) - (gelu(v) + gelu(-v)));
}

inline double product_grid_error(double M, double lambda, int grid = 101) {
  double worst = 0.0;
  for (int i = 0; i < grid; ++i) {
    const double a = -M + 2.0 * M * i / (grid - 1);
    for (int j = 0; j < grid; ++j) {
      const double b = -M + 2.0 * M * j / (grid - 1);
      worst = std::max(worst, std::abs(product_cell(a, b, lambda) - a * b));
    }
  }
  return worst;
}

struct ProductCalibration {
  double M = 0.0;
  double eps = 0.0;
  double lambda = 0.0;
  double grid_error = 0.0;
  int doublings = 0;
};

// Doubles lambda from 1 until the grid error on [-M, M]^2 is within eps.
inline ProductCalibration calibrate_product(double M, double eps, int max_doublings = 60) {
  require(M > 0.0 && eps > 0.0, "product calibration needs M > 0 and eps > 0");
  ProductCalibration c{M, eps, 1.0, 0.0, 0};
  for (; c.doublings <= max_doublings; ++c.doublings) {
    c.grid_error = product_grid_error(M, c.lambda);
    if (c.grid_error <= eps) return c;
    c.lambda *= 2.0;
  }
  throw CalibrationError("product MLP calibration did not reach eps = " + std::to_string(eps) + " on [-" +
                         std::to_string(M) + ", " + std::to_string(M) + "]^2");
}

// Scalar product MLP on input (a, b): Wa is 2 x 4, Wb is 4 x 1.
inline Ffn build_product_mlp(double M, double eps, ProductCalibration* cal = nullptr) {
  const ProductCalibration c = calibrate_product(M, eps);
  if (cal) *cal = c;
  Ffn f;
  f.Wa.resize(2, 4);
  f.Wa << 1, -1, 1, -1,  //
      1, -1, -1, 1;
  f.Wa /= c.lambda;
  const double s = product_cell_scale(c.lambda);
  f.Wb.resize(4, 1);
  f.Wb << s, s, -s, -s;
  return f;
}

// (1/c) GeLU(c x) approaches ReLU(x); doubles c from 1 until the gap on
// [-M, M] is within eta.
struct ReluSimCalibration {
  double scale = 1.0;
  double gap = 0.0;
};

inline double relu_sim_gap(double M, double c, int grid = 2001) {
  double worst = 0.0;
  for (int i = 0; i < grid; ++i) {
    const double x = -M + 2.0 * M * i / (grid - 1);
    worst = std::max(worst, std::abs(nn::gelu(c * x) / c - nn::relu(x)));
  }
  // The gap peaks near |x| ~ 0.75 / c, which a coarse grid can step over.
  for (double u : {0.5, 0.75, 1.0}) worst = std::max(worst, std::abs(nn::gelu(-u) / c));
  return worst;
}

inline ReluSimCalibration calibrate_relu_sim(double M, double eta, int max_doublings = 80) {
  require(M > 0.0 && eta > 0.0, "ReLU simulation calibration needs M > 0 and eta > 0");
  ReluSimCalibration r;
  for (int k = 0; k <= max_doublings; ++k) {
    r.gap = relu_sim_gap(M, r.scale);
    if (r.gap <= eta) return r;
    r.scale *= 2.0;
  }
  throw CalibrationError("GeLU-to-ReLU scale calibration did not converge");
}

// Writes hidden-unit columns [unit, unit + 4) computing the product of input
// columns `a_col` (shifted by `a_shift` times the constant column) and
// `b_col` (same), accumulated with `weight` into output column `out_col`.
struct CellWriter {
  Matrix& Wa;
  Matrix& Wb;
  double lambda;
  Eigen::Index one_col;

  void add(Eigen::Index unit, Eigen::Index a_col, double a_shift, Eigen::Index b_col, double b_shift,
           Eigen::Index out_col, double weight) {
    static constexpr double sa[4] = {1, -1, 1, -1};
    static constexpr double sb[4] = {1, -1, -1, 1};
    const double s = product_cell_scale(lambda) * weight;
    for (int q = 0; q < 4; ++q) {
      Wa(a_col, unit + q) += sa[q] / lambda;
      Wa(b_col, unit + q) += sb[q] / lambda;
      if (a_shift != 0.0 || b_shift != 0.0) Wa(one_col, unit + q) += (sa[q] * a_shift + sb[q] * b_shift) / lambda;
      Wb(unit + q, out_col) += (q < 2 ? s : -s);
    }
  }

  // Same cell with each operand an arbitrary linear form of the inputs.
  void add_forms(Eigen::Index unit, const Vector& a_form, const Vector& b_form, Eigen::Index out_col, double weight) {
    static constexpr double sa[4] = {1, -1, 1, -1};
    static constexpr double sb[4] = {1, -1, -1, 1};
    const double s = product_cell_scale(lambda) * weight;
    for (int q = 0; q < 4; ++q) {
      Wa.col(unit + q) += (sa[q] * a_form + sb[q] * b_form) / lambda;
      Wb(unit + q, out_col) += (q < 2 ? s : -s);
    }
  }

  // Two units realizing weight * x exactly: (GeLU(c x) - GeLU(-c x)) / c = x.
  void add_linear(Eigen::Index unit, Eigen::Index in_col, Eigen::Index out_col, double weight, double c) {
    Wa(in_col, unit) += c;
    Wa(in_col, unit + 1) -= c;
    Wb(unit, out_col) += weight / c;
    Wb(unit + 1, out_col) -= weight / c;
  }
};

enum class ProductSide {
  left,   // (A - I) B
  right,  // B (A - I)
};

// Column layout of a residual stream holding two n x n operands (row-major
// vec) and a constant-1 column. The MLP adds the product correction to B's
// slot and clears A's slot, so X + mlp(X) carries the full product where B
// was and zeros where A was.
struct MatmulLayout {
  int n = 0;
  Eigen::Index dim = 0;
  Eigen::Index a_off = 0;
  Eigen::Index b_off = 0;
  Eigen::Index one_col = 0;

  Eigen::Index a(int r, int c) const { return a_off + r * n + c; }
  Eigen::Index b(int r, int c) const { return b_off + r * n + c; }
};

struct MatmulMlpInfo {
  ProductCalibration product;
  double cell_eps = 0.0;
  double flip_scale = 1.0;
  Eigen::Index width = 0;
};

inline Ffn build_matmul_mlp(const MatmulLayout& lay, double M, double eps, ProductSide side,
                            MatmulMlpInfo* info = nullptr, double flip_scale = 1.0) {
  require(lay.n >= 1, "matmul MLP needs n >= 1");
  const int n = lay.n;
  const double cell_eps = eps / n;
  const ProductCalibration cal = calibrate_product(M, cell_eps);
  const Eigen::Index width = 4 * static_cast<Eigen::Index>(n) * n * n + 2 * static_cast<Eigen::Index>(n) * n;
  Ffn f;
  f.Wa = Matrix::Zero(lay.dim, width);
  f.Wb = Matrix::Zero(width, lay.dim);
  CellWriter w{f.Wa, f.Wb, cal.lambda, lay.one_col};
  Eigen::Index unit = 0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      for (int k = 0; k < n; ++k) {
        if (side == ProductSide::left) {
          // (A - I)[r,k] * B[k,c]
          w.add(unit, lay.a(r, k), r == k ? -1.0 : 0.0, lay.b(k, c), 0.0, lay.b(r, c), 1.0);
        } else {
          // B[r,k] * (A - I)[k,c]
          w.add(unit, lay.b(r, k), 0.0, lay.a(k, c), k == c ? -1.0 : 0.0, lay.b(r, c), 1.0);
        }
        unit += 4;
      }
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      w.add_linear(unit, lay.a(r, c), lay.a(r, c), -1.0, flip_scale);
      unit += 2;
    }
  if (info) *info = {cal, cell_eps, flip_scale, width};
  return f;
}

// Standalone form: input [vec(A), vec(B), 1].
inline Ffn build_matmul_mlp(int n, double M, double eps, MatmulMlpInfo* info = nullptr) {
  const MatmulLayout lay{n, 2 * static_cast<Eigen::Index>(n) * n + 1, 0, static_cast<Eigen::Index>(n) * n,
                         2 * static_cast<Eigen::Index>(n) * n};
  return build_matmul_mlp(lay, M, eps, ProductSide::left, info);
}

}  // namespace hmmlab::construct
