#pragma once

#include "hmmlab/core.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace hmmlab {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed + 0x9e3779b97f4a7c15ULL) ^ (index * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL));
}

// Counter-based generator: draw k of a stream is mix64(key + k * golden), so a
// stream is fully determined by (key, counter) and substreams are split off by
// hashing. All distributions are hand-rolled so outputs do not depend on the
// standard library's distribution implementations.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}
  Stream(std::uint64_t seed, std::uint64_t index) : key_(stream_key(seed, index)) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_open0() { return 1.0 - uniform(); }

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
  }

  double exponential() { return -std::log(uniform_open0()); }

  // Box-Muller; the spare variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open0()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  int categorical(const Vector& probs) {
    const double u = uniform();
    double acc = 0.0;
    int last_positive = -1;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      if (probs(i) <= 0.0) continue;
      acc += probs(i);
      last_positive = static_cast<int>(i);
      if (u < acc) return static_cast<int>(i);
    }
    if (last_positive < 0) throw NumericError("categorical draw from an all-zero distribution");
    return last_positive;
  }

  Stream split(std::uint64_t index) const { return Stream(stream_key(key_, index)); }
  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Flat Dirichlet column: normalized iid standard exponentials.
inline Vector dirichlet_flat(Stream& rng, Eigen::Index dim) {
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.exponential();
  return v / v.sum();
}

inline Matrix gaussian_matrix(Stream& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix g(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = rng.normal();
  return g;
}

// Haar-distributed orthogonal matrix: Q factor of a Gaussian matrix with the
// signs of R's diagonal folded back into Q.
inline Matrix haar_orthogonal(Stream& rng, Eigen::Index n) {
  const Matrix g = gaussian_matrix(rng, n, n);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

// Sattolo's algorithm: uniform over permutations consisting of a single n-cycle.
inline std::vector<int> sattolo_cycle(Stream& rng, int n) {
  std::vector<int> a(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i)));
    std::swap(a[static_cast<std::size_t>(i)], a[j]);
  }
  return a;
}

}  // namespace hmmlab
