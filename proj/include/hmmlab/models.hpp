#pragma once

#include "hmmlab/core.hpp"
#include "hmmlab/rng.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace hmmlab {

inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kOrthoTol = 1e-10;

// Column convention throughout: P(s', s) = Pr(s' | s), O(o, s) = Pr(o | s).
struct HmmInstance {
  int n = 0;
  int m = 0;
  Matrix P;
  Matrix O;
  int s0 = 0;

  void validate() const;
  bool deterministic_transition() const;
};

struct MatMulInstance {
  int n = 0;
  int m = 0;
  std::vector<Matrix> A;
  Vector b0;

  void validate() const;
};

struct LdsInstance {
  int n = 0;
  Matrix A;
  Matrix B;
  double sigma_state = 1.0;
  double sigma_obs = 1.0;
  Vector x0;

  void validate() const;
};

struct CyclicDetInstance {
  int n = 0;
  int m = 0;
  std::vector<std::vector<int>> perms;
  int s0 = 0;

  void validate() const;
};

struct CyclicRndParams {
  double eps = 0.01;
  void validate() const {
    if (!(eps > 0.0 && eps < 0.5)) throw ParameterError("CyclicRnd eps must lie in (0, 0.5)");
  }
};

struct CyclicHardParams {
  double alpha = 0.0;
  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("CyclicHard alpha must lie in (0, 1)");
  }
};

namespace detail {

inline void check_stochastic(const Matrix& M, const std::string& what) {
  if (!M.allFinite()) throw ValidationError(what + " has non-finite entries");
  if (M.size() > 0 && M.minCoeff() < 0.0) throw ValidationError(what + " has negative entries");
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    if (std::abs(M.col(j).sum() - 1.0) > kStochasticTol)
      throw ValidationError(what + " column " + std::to_string(j) + " does not sum to 1");
}

inline bool is_single_cycle(const std::vector<int>& perm) {
  const int n = static_cast<int>(perm.size());
  std::vector<char> seen(perm.size(), 0);
  for (int v : perm) {
    if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = 1;
  }
  int s = 0;
  for (int k = 1; k <= n; ++k) {
    s = perm[static_cast<std::size_t>(s)];
    if (s == 0) return k == n;
  }
  return false;
}

}  // namespace detail

inline void HmmInstance::validate() const {
  if (n < 1 || m < 1) throw ValidationError("HMM needs n >= 1 and m >= 1");
  require_shape(P.rows() == n && P.cols() == n, "HMM transition must be n x n");
  require_shape(O.rows() == m && O.cols() == n, "HMM emission must be m x n");
  detail::check_stochastic(P, "transition");
  detail::check_stochastic(O, "emission");
  if (s0 < 0 || s0 >= n) throw ValidationError("HMM initial state out of range");
}

inline bool HmmInstance::deterministic_transition() const {
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    int ones = 0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      if (P(i, j) == 1.0) ++ones;
      else if (P(i, j) != 0.0) return false;
    }
    if (ones != 1) return false;
  }
  return true;
}

inline void MatMulInstance::validate() const {
  if (n < 1 || m < 1) throw ValidationError("MatMul needs n >= 1 and m >= 1");
  if (static_cast<int>(A.size()) != m) throw ValidationError("MatMul needs one matrix per observation");
  for (const auto& a : A) {
    require_shape(a.rows() == n && a.cols() == n, "MatMul matrices must be n x n");
    if (linf_gap(a.transpose() * a, Matrix::Identity(n, n)) > kOrthoTol)
      throw ValidationError("MatMul matrix is not orthonormal");
  }
  require_shape(b0.size() == n, "MatMul initial state must have n entries");
  if (std::abs(b0.norm() - 1.0) > kStochasticTol) throw ValidationError("MatMul initial state must have unit norm");
}

inline void LdsInstance::validate() const {
  if (n < 1) throw ValidationError("LDS needs n >= 1");
  require_shape(A.rows() == n && A.cols() == n && B.rows() == n && B.cols() == n, "LDS matrices must be n x n");
  require_shape(x0.size() == n, "LDS initial state must have n entries");
  if (!(sigma_state >= 0.0 && sigma_obs >= 0.0)) throw ValidationError("LDS noise levels must be nonnegative");
}

inline void CyclicDetInstance::validate() const {
  if (n < 1 || m < 1) throw ValidationError("CyclicDet needs n >= 1 and m >= 1");
  if (static_cast<int>(perms.size()) != m) throw ValidationError("CyclicDet needs one permutation per action");
  for (const auto& p : perms) {
    if (static_cast<int>(p.size()) != n || !detail::is_single_cycle(p))
      throw ValidationError("CyclicDet permutation is not a single n-cycle");
  }
  if (s0 < 0 || s0 >= n) throw ValidationError("CyclicDet initial state out of range");
}

// A(s', s) = 1 iff perm[s] = s'.
inline Matrix permutation_matrix(const std::vector<int>& perm) {
  const auto n = static_cast<Eigen::Index>(perm.size());
  Matrix A = Matrix::Zero(n, n);
  for (Eigen::Index s = 0; s < n; ++s) A(perm[static_cast<std::size_t>(s)], s) = 1.0;
  return A;
}

// Random HMM with flat-Dirichlet columns. A positive floor mixes in the uniform
// column so every entry is at least `floor`.
inline HmmInstance gen_hmm(int n, int m, std::uint64_t seed, double floor = 0.0) {
  require(n >= 2 && m >= 2, "gen_hmm needs n >= 2 and m >= 2");
  require(floor >= 0.0 && floor * n <= 1.0 && floor * m <= 1.0, "gen_hmm floor too large");
  Stream rng(seed, 0);
  HmmInstance h;
  h.n = n;
  h.m = m;
  h.P.resize(n, n);
  h.O.resize(m, n);
  for (int s = 0; s < n; ++s) h.P.col(s) = floor + (1.0 - n * floor) * dirichlet_flat(rng, n).array();
  for (int s = 0; s < n; ++s) h.O.col(s) = floor + (1.0 - m * floor) * dirichlet_flat(rng, m).array();
  h.s0 = 0;
  return h;
}

inline MatMulInstance gen_matmul(int n, int m, std::uint64_t seed) {
  require(n >= 2 && m >= 1, "gen_matmul needs n >= 2 and m >= 1");
  Stream rng(seed, 0);
  MatMulInstance mm;
  mm.n = n;
  mm.m = m;
  for (int o = 0; o < m; ++o) mm.A.push_back(haar_orthogonal(rng, n));
  mm.b0 = one_hot(n, 0);
  return mm;
}

// `scale` multiplies A (1 = the unscaled orthogonal default).
inline LdsInstance gen_lds(int n, std::uint64_t seed, double scale = 1.0) {
  require(n >= 1, "gen_lds needs n >= 1");
  require(scale > 0.0, "gen_lds scale must be positive");
  Stream rng(seed, 0);
  LdsInstance l;
  l.n = n;
  l.A = scale * haar_orthogonal(rng, n);
  l.B = haar_orthogonal(rng, n);
  l.x0 = one_hot(n, 0);
  return l;
}

inline CyclicDetInstance gen_cyclic_det(int n, int m, std::uint64_t seed) {
  require(n >= 2 && m >= 1, "gen_cyclic_det needs n >= 2 and m >= 1");
  Stream rng(seed, 0);
  CyclicDetInstance c;
  c.n = n;
  c.m = m;
  for (int i = 0; i < m; ++i) c.perms.push_back(sattolo_cycle(rng, n));
  c.s0 = 0;
  return c;
}

inline std::vector<Matrix> det_kernels(const CyclicDetInstance& c) {
  std::vector<Matrix> k;
  for (const auto& p : c.perms) k.push_back(permutation_matrix(p));
  return k;
}

// Augmented HMM over pairs (s, o) packed as s * m + o. The pair records the
// action that led into s; the next action is uniform, so transitions are
// kernel[o'](s', s) / m and state (s, o) emits o deterministically.
inline HmmInstance mdp_to_hmm(const std::vector<Matrix>& kernels, int n, int m, int s0 = 0) {
  require(n >= 1 && m >= 1, "mdp_to_hmm needs n >= 1 and m >= 1");
  if (static_cast<int>(kernels.size()) != m) throw ValidationError("mdp_to_hmm needs one kernel per action");
  for (const auto& k : kernels) {
    require_shape(k.rows() == n && k.cols() == n, "mdp_to_hmm kernel must be n x n");
    detail::check_stochastic(k, "action kernel");
  }
  require(s0 >= 0 && s0 < n, "mdp_to_hmm initial state out of range");
  const int N = n * m;
  HmmInstance h;
  h.n = N;
  h.m = m;
  h.P = Matrix::Zero(N, N);
  h.O = Matrix::Zero(m, N);
  for (int s = 0; s < n; ++s) {
    for (int o = 0; o < m; ++o) {
      const int from = s * m + o;
      h.O(o, from) = 1.0;
      for (int o2 = 0; o2 < m; ++o2)
        for (int s2 = 0; s2 < n; ++s2) h.P(s2 * m + o2, from) = kernels[static_cast<std::size_t>(o2)](s2, s) / m;
    }
  }
  h.s0 = s0 * m;
  return h;
}

// Per-action kernels with 1 - eps on the cycle successor and eps on the
// predecessor. eps = 0 is accepted so the deterministic limit can be formed.
inline std::vector<Matrix> cyclic_rnd_kernels(const CyclicDetInstance& c, double eps) {
  require(eps >= 0.0 && eps < 0.5, "cyclic_rnd_kernels eps must lie in [0, 0.5)");
  std::vector<Matrix> ks;
  for (const auto& perm : c.perms) {
    Matrix k = Matrix::Zero(c.n, c.n);
    std::vector<int> pred(perm.size());
    for (int s = 0; s < c.n; ++s) pred[static_cast<std::size_t>(perm[static_cast<std::size_t>(s)])] = s;
    for (int s = 0; s < c.n; ++s) {
      k(perm[static_cast<std::size_t>(s)], s) += 1.0 - eps;
      k(pred[static_cast<std::size_t>(s)], s) += eps;
    }
    ks.push_back(std::move(k));
  }
  return ks;
}

inline HmmInstance gen_cyclic_rnd(int n, int m, const CyclicRndParams& params, std::uint64_t seed) {
  params.validate();
  const CyclicDetInstance base = gen_cyclic_det(n, m, seed);
  return mdp_to_hmm(cyclic_rnd_kernels(base, params.eps), n, m, base.s0);
}

// Observation packing for the three-stage model.
struct HardAlphabet {
  int n = 0;
  int m = 0;
  int state_symbol(int s) const { return s; }
  int obs_symbol(int o) const { return n + o; }
  int signal() const { return n + m; }
  int size() const { return n + m + 1; }
};

// Three copies (stage 0, 1, 2) of the base's augmented state set, index
// stage * N + a. alpha = 0 is accepted here for the degenerate check; the
// params type enforces the open interval.
inline HmmInstance build_cyclic_hard(const CyclicDetInstance& base, double alpha) {
  base.validate();
  require(alpha >= 0.0 && alpha < 1.0, "build_cyclic_hard alpha must lie in [0, 1)");
  const HmmInstance aug = mdp_to_hmm(det_kernels(base), base.n, base.m, base.s0);
  const int N = aug.n;
  const HardAlphabet ab{base.n, base.m};
  HmmInstance h;
  h.n = 3 * N;
  h.m = ab.size();
  h.P = Matrix::Zero(h.n, h.n);
  h.O = Matrix::Zero(h.m, h.n);
  for (int a = 0; a < N; ++a) {
    const int s = a / base.m;
    h.P.block(0, a, N, 1) = (1.0 - alpha) * aug.P.col(a);
    h.P(N + a, a) += alpha;
    for (int o = 0; o < base.m; ++o) h.O(ab.obs_symbol(o), a) = aug.O(o, a);
    h.P(2 * N + a, N + a) = 1.0;
    h.O(ab.signal(), N + a) = 1.0;
    h.P(a, 2 * N + a) = 1.0;
    h.O(ab.state_symbol(s), 2 * N + a) = 1.0;
  }
  h.s0 = aug.s0;
  return h;
}

inline HmmInstance build_cyclic_hard(const CyclicDetInstance& base, const CyclicHardParams& params) {
  params.validate();
  return build_cyclic_hard(base, params.alpha);
}

enum class ModelKind { hmm, matmul, lds, cyclic_det, cyclic_rnd, cyclic_hard };
enum class TargetKind { belief, nextobs, kalman };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::hmm: return "hmm";
    case ModelKind::matmul: return "matmul";
    case ModelKind::lds: return "lds";
    case ModelKind::cyclic_det: return "cyclic_det";
    case ModelKind::cyclic_rnd: return "cyclic_rnd";
    case ModelKind::cyclic_hard: return "cyclic_hard";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  for (ModelKind k : {ModelKind::hmm, ModelKind::matmul, ModelKind::lds, ModelKind::cyclic_det,
                      ModelKind::cyclic_rnd, ModelKind::cyclic_hard})
    if (s == to_string(k)) return k;
  throw ParameterError("unknown model kind '" + s + "'");
}

inline const char* to_string(TargetKind k) {
  switch (k) {
    case TargetKind::belief: return "belief";
    case TargetKind::nextobs: return "nextobs";
    case TargetKind::kalman: return "kalman";
  }
  return "?";
}

inline TargetKind target_kind_from_string(const std::string& s) {
  for (TargetKind k : {TargetKind::belief, TargetKind::nextobs, TargetKind::kalman})
    if (s == to_string(k)) return k;
  throw FormatError("unknown target kind '" + s + "'");
}

// The task each family is studied under.
inline TargetKind default_target(ModelKind k) {
  switch (k) {
    case ModelKind::lds: return TargetKind::kalman;
    case ModelKind::cyclic_hard: return TargetKind::nextobs;
    default: return TargetKind::belief;
  }
}

// Tagged union over the six families. HMM-shaped families (hmm, cyclic_rnd,
// cyclic_hard) carry an HmmInstance; cyclic_det keeps its permutations.
struct ModelInstance {
  ModelKind kind = ModelKind::hmm;
  std::variant<HmmInstance, MatMulInstance, LdsInstance, CyclicDetInstance> body;
  int base_n = 0;
  int base_m = 0;
  double eps = 0.0;
  double alpha = 0.0;

  const HmmInstance& hmm() const { return std::get<HmmInstance>(body); }
  const MatMulInstance& matmul() const { return std::get<MatMulInstance>(body); }
  const LdsInstance& lds() const { return std::get<LdsInstance>(body); }
  const CyclicDetInstance& cyclic_det() const { return std::get<CyclicDetInstance>(body); }
  bool is_hmm() const { return std::holds_alternative<HmmInstance>(body); }

  // Dimension of a single observation symbol space (or vector for LDS).
  int obs_count() const {
    switch (kind) {
      case ModelKind::matmul: return matmul().m;
      case ModelKind::lds: return lds().n;
      case ModelKind::cyclic_det: return cyclic_det().m;
      default: return hmm().m;
    }
  }

  // Dimension of the belief (state) vector.
  int state_dim() const {
    switch (kind) {
      case ModelKind::matmul: return matmul().n;
      case ModelKind::lds: return lds().n;
      case ModelKind::cyclic_det: return cyclic_det().n;
      default: return hmm().n;
    }
  }

  int target_dim(TargetKind t) const {
    if (t == TargetKind::nextobs) return obs_count();
    return state_dim();
  }

  void validate() const {
    std::visit([](const auto& b) { b.validate(); }, body);
  }
};

struct ModelSpec {
  ModelKind kind = ModelKind::hmm;
  int n = 5;
  int m = 5;
  std::uint64_t seed = 0;
  double eps = 0.01;
  double alpha = 0.0;  // 0 selects 1/T for cyclic_hard
  int T = 120;
  double lds_scale = 1.0;
};

inline ModelInstance make_model(const ModelSpec& spec) {
  ModelInstance mi;
  mi.kind = spec.kind;
  mi.base_n = spec.n;
  mi.base_m = spec.m;
  switch (spec.kind) {
    case ModelKind::hmm: mi.body = gen_hmm(spec.n, spec.m, spec.seed); break;
    case ModelKind::matmul: mi.body = gen_matmul(spec.n, spec.m, spec.seed); break;
    case ModelKind::lds:
      mi.body = gen_lds(spec.n, spec.seed, spec.lds_scale);
      mi.base_m = spec.n;
      break;
    case ModelKind::cyclic_det: mi.body = gen_cyclic_det(spec.n, spec.m, spec.seed); break;
    case ModelKind::cyclic_rnd:
      mi.eps = spec.eps;
      mi.body = gen_cyclic_rnd(spec.n, spec.m, CyclicRndParams{spec.eps}, spec.seed);
      break;
    case ModelKind::cyclic_hard: {
      require(spec.T >= 2 || spec.alpha > 0.0, "cyclic_hard needs T >= 2 or an explicit alpha");
      mi.alpha = spec.alpha > 0.0 ? spec.alpha : 1.0 / spec.T;
      mi.body = build_cyclic_hard(gen_cyclic_det(spec.n, spec.m, spec.seed), CyclicHardParams{mi.alpha});
      break;
    }
  }
  return mi;
}

}  // namespace hmmlab
