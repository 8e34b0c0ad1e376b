#pragma once

#include "hmmlab/core.hpp"
#include "hmmlab/filtering.hpp"
#include "hmmlab/models.hpp"

#include <vector>

namespace hmmlab::construct {

// The constructions see every supported model as s_t = A_{o_t} s_{t-1} from s_0.
struct LinearSystem {
  int n = 0;
  int m = 0;
  std::vector<Matrix> A;
  Vector s0;
  bool normalized = true;  // false when the recursion drops the l1 normalization
};

inline LinearSystem linear_system(const MatMulInstance& mm) { return {mm.n, mm.m, mm.A, mm.b0, true}; }

inline LinearSystem linear_system(const CyclicDetInstance& c) {
  return {c.n, c.m, det_kernels(c), one_hot(c.n, c.s0), true};
}

// Deterministic transition: the belief stays a point mass and ignores the
// observation, so every A_o is P.
inline LinearSystem linear_system_deterministic(const HmmInstance& h) {
  if (!h.deterministic_transition())
    throw UnsupportedModelError("construction requires a deterministic transition matrix");
  return {h.n, h.m, std::vector<Matrix>(static_cast<std::size_t>(h.m), h.P), one_hot(h.n, h.s0), true};
}

// A_o = diag(O(o|.)) P; products give the unnormalized belief.
inline LinearSystem linear_system_unnormalized(const HmmInstance& h) {
  LinearSystem s{h.n, h.m, {}, one_hot(h.n, h.s0), false};
  for (int o = 0; o < h.m; ++o) s.A.push_back(h.O.row(o).transpose().asDiagonal() * h.P);
  return s;
}

inline LinearSystem linear_system(const ModelInstance& mi) {
  switch (mi.kind) {
    case ModelKind::matmul: return linear_system(mi.matmul());
    case ModelKind::cyclic_det: return linear_system(mi.cyclic_det());
    case ModelKind::hmm:
    case ModelKind::cyclic_rnd:
    case ModelKind::cyclic_hard: return linear_system_deterministic(mi.hmm());
    case ModelKind::lds: break;
  }
  throw UnsupportedModelError(std::string("no construction for model '") + to_string(mi.kind) + "'");
}

// Exact oracle: s_1..s_T.
inline std::vector<Vector> linear_states(const LinearSystem& sys, const std::vector<int>& obs) {
  std::vector<Vector> out;
  Vector s = sys.s0;
  for (int o : obs) {
    require(o >= 0 && o < sys.m, "observation index out of range");
    s = sys.A[static_cast<std::size_t>(o)] * s;
    out.push_back(s);
  }
  return out;
}

}  // namespace hmmlab::construct
