#pragma once

#include "hmmlab/nn/rnn.hpp"
#include "hmmlab/nn/transformer.hpp"
#include "hmmlab/rollout.hpp"
#include "hmmlab/train/loss.hpp"

#include <variant>
#include <vector>

namespace hmmlab::train {

// Input rows for trained nets: the observation (one-hot, or the raw vector for
// LDS) followed by an optional belief channel that is zero except where a
// block starts.
struct InputEncoding {
  int obs_dim = 0;
  int belief_dim = 0;

  int dim() const { return obs_dim + belief_dim; }
  bool has_belief() const { return belief_dim > 0; }
};

inline InputEncoding encoding_for(const ModelInstance& model, bool belief_channel) {
  return {model.obs_count(), belief_channel ? model.state_dim() : 0};
}

// Belief before any observation.
inline Vector initial_belief(const ModelInstance& model) {
  switch (model.kind) {
    case ModelKind::matmul: return model.matmul().b0;
    case ModelKind::lds: return model.lds().x0;
    case ModelKind::cyclic_det: return one_hot(model.cyclic_det().n, model.cyclic_det().s0);
    default: return one_hot(model.hmm().n, model.hmm().s0);
  }
}

inline Matrix encode_obs(const InputEncoding& enc, const std::vector<int>& obs, const Vector* belief = nullptr) {
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(obs.size()), enc.dim());
  for (std::size_t t = 0; t < obs.size(); ++t) {
    require(obs[t] >= 0 && obs[t] < enc.obs_dim, "observation index out of range");
    x(static_cast<Eigen::Index>(t), obs[t]) = 1.0;
  }
  if (belief && enc.has_belief() && x.rows() > 0) {
    require_shape(belief->size() == enc.belief_dim, "belief channel width mismatch");
    x.block(0, enc.obs_dim, 1, enc.belief_dim) = belief->transpose();
  }
  return x;
}

// First `len` steps of a trajectory; nets with a belief channel see the
// initial belief at position 0.
inline Matrix encode_trajectory(const InputEncoding& enc, const Trajectory& tr, std::size_t len, const Vector* belief = nullptr) {
  require(len <= tr.length(), "encode length exceeds trajectory");
  if (!tr.continuous()) return encode_obs(enc, std::vector<int>(tr.obs.begin(), tr.obs.begin() + static_cast<long>(len)), belief);
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(len), enc.dim());
  for (std::size_t t = 0; t < len; ++t) {
    require_shape(tr.obs_vec[t].size() == enc.obs_dim, "observation vector width mismatch");
    x.block(static_cast<Eigen::Index>(t), 0, 1, enc.obs_dim) = tr.obs_vec[t].transpose();
  }
  if (belief && enc.has_belief() && len > 0) x.block(0, enc.obs_dim, 1, enc.belief_dim) = belief->transpose();
  return x;
}

inline Matrix stack_rows(const std::vector<Vector>& vs, std::size_t len) {
  require(len <= vs.size(), "stack length exceeds sequence");
  if (len == 0) return Matrix(0, 0);
  Matrix out(static_cast<Eigen::Index>(len), vs.front().size());
  for (std::size_t t = 0; t < len; ++t) out.row(static_cast<Eigen::Index>(t)) = vs[t].transpose();
  return out;
}

enum class NetKind { rnn, transformer };

inline const char* to_string(NetKind k) { return k == NetKind::rnn ? "rnn" : "transformer"; }

inline NetKind net_kind_from_string(const std::string& s) {
  if (s == "rnn") return NetKind::rnn;
  if (s == "transformer" || s == "tf") return NetKind::transformer;
  throw ParameterError("unknown net kind '" + s + "'");
}

// A trained predictor: weights, input encoding and how outputs are read.
struct Network {
  std::variant<nn::RnnWeights, nn::TransformerWeights> body;
  InputEncoding enc;
  LossKind loss = LossKind::cross_entropy;

  NetKind kind() const { return std::holds_alternative<nn::RnnWeights>(body) ? NetKind::rnn : NetKind::transformer; }
  const nn::RnnWeights& rnn() const { return std::get<nn::RnnWeights>(body); }
  const nn::TransformerWeights& transformer() const { return std::get<nn::TransformerWeights>(body); }
  nn::RnnWeights& rnn() { return std::get<nn::RnnWeights>(body); }
  nn::TransformerWeights& transformer() { return std::get<nn::TransformerWeights>(body); }

  // Raw outputs in eval mode.
  Matrix raw(const Matrix& inputs) const {
    if (kind() == NetKind::rnn) return nn::rnn_forward(rnn(), inputs).output;
    return nn::transformer_forward(transformer(), inputs);
  }

  Matrix predict(const Matrix& inputs) const { return to_prediction(raw(inputs), loss); }
};

}  // namespace hmmlab::train
