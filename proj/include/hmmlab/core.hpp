#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmmlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Error hierarchy. Every failure surfaced by the library derives from Error so
// callers (the CLI in particular) can map them onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class TaskError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ImpossibleObservation : public Error {
 public:
  ImpossibleObservation(std::size_t step, int observation)
      : Error("observation " + std::to_string(observation) + " at step " +
              std::to_string(step) + " has zero probability under the current belief"),
        step_(step),
        observation_(observation) {}

  std::size_t step() const { return step_; }
  int observation() const { return observation_; }

 private:
  std::size_t step_;
  int observation_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ParameterError(what);
}

inline void require_shape(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

inline Vector one_hot(Eigen::Index dim, Eigen::Index index) {
  Vector v = Vector::Zero(dim);
  v(index) = 1.0;
  return v;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// Max-abs entry of a difference; the lab's default ℓ∞ comparison.
template <typename A, typename B>
double linf_gap(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

inline int ceil_log2(int t) {
  int l = 0;
  while ((1 << l) < t) ++l;
  return l;
}

}  // namespace hmmlab
