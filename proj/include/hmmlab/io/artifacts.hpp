#pragma once

#include "hmmlab/construct/theorem1.hpp"
#include "hmmlab/construct/theorem3.hpp"
#include "hmmlab/construct/verify.hpp"
#include "hmmlab/eval/metrics.hpp"
#include "hmmlab/io/text_doc.hpp"
#include "hmmlab/train/trainer.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace hmmlab::io {

using json = nlohmann::json;

// ---- model manifests -------------------------------------------------------

inline Matrix col(const Vector& v) { return v; }

inline TextDoc model_doc(const ModelInstance& mi) {
  TextDoc d;
  d.kind = "model";
  d.set("kind", to_string(mi.kind));
  d.set("base_n", mi.base_n);
  d.set("base_m", mi.base_m);
  d.set("eps", mi.eps);
  d.set("alpha", mi.alpha);
  switch (mi.kind) {
    case ModelKind::matmul: {
      const auto& mm = mi.matmul();
      d.set("n", mm.n);
      d.set("m", mm.m);
      for (int o = 0; o < mm.m; ++o) d.add("A" + std::to_string(o), mm.A[static_cast<std::size_t>(o)]);
      d.add("b0", col(mm.b0));
      break;
    }
    case ModelKind::lds: {
      const auto& l = mi.lds();
      d.set("n", l.n);
      d.set("sigma_state", l.sigma_state);
      d.set("sigma_obs", l.sigma_obs);
      d.add("A", l.A);
      d.add("B", l.B);
      d.add("x0", col(l.x0));
      break;
    }
    case ModelKind::cyclic_det: {
      const auto& c = mi.cyclic_det();
      d.set("n", c.n);
      d.set("m", c.m);
      d.set("s0", c.s0);
      Matrix perms(c.m, c.n);
      for (int o = 0; o < c.m; ++o)
        for (int s = 0; s < c.n; ++s) perms(o, s) = c.perms[static_cast<std::size_t>(o)][static_cast<std::size_t>(s)];
      d.add("perms", perms);
      break;
    }
    default: {
      const auto& h = mi.hmm();
      d.set("n", h.n);
      d.set("m", h.m);
      d.set("s0", h.s0);
      d.add("P", h.P);
      d.add("O", h.O);
      break;
    }
  }
  return d;
}

inline ModelInstance model_from_doc(const TextDoc& d) {
  d.expect_kind("model");
  ModelInstance mi;
  mi.kind = model_kind_from_string(d.get("kind"));
  mi.base_n = d.get_int("base_n");
  mi.base_m = d.get_int("base_m");
  mi.eps = d.get_double("eps");
  mi.alpha = d.get_double("alpha");
  switch (mi.kind) {
    case ModelKind::matmul: {
      MatMulInstance mm;
      mm.n = d.get_int("n");
      mm.m = d.get_int("m");
      for (int o = 0; o < mm.m; ++o) mm.A.push_back(d.tensor("A" + std::to_string(o), mm.n, mm.n));
      mm.b0 = d.tensor("b0", mm.n, 1);
      mi.body = std::move(mm);
      break;
    }
    case ModelKind::lds: {
      LdsInstance l;
      l.n = d.get_int("n");
      l.sigma_state = d.get_double("sigma_state");
      l.sigma_obs = d.get_double("sigma_obs");
      l.A = d.tensor("A", l.n, l.n);
      l.B = d.tensor("B", l.n, l.n);
      l.x0 = d.tensor("x0", l.n, 1);
      mi.body = std::move(l);
      break;
    }
    case ModelKind::cyclic_det: {
      CyclicDetInstance c;
      c.n = d.get_int("n");
      c.m = d.get_int("m");
      c.s0 = d.get_int("s0");
      const Matrix& perms = d.tensor("perms", c.m, c.n);
      for (int o = 0; o < c.m; ++o) {
        std::vector<int> p;
        for (int s = 0; s < c.n; ++s) p.push_back(static_cast<int>(perms(o, s)));
        c.perms.push_back(std::move(p));
      }
      mi.body = std::move(c);
      break;
    }
    default: {
      HmmInstance h;
      h.n = d.get_int("n");
      h.m = d.get_int("m");
      h.s0 = d.get_int("s0");
      h.P = d.tensor("P", h.n, h.n);
      h.O = d.tensor("O", h.m, h.n);
      mi.body = std::move(h);
      break;
    }
  }
  try {
    mi.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("model manifest fails validation: ") + e.what());
  }
  return mi;
}

// ---- trajectories (one JSON object per line) ------------------------------

inline json vec_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector json_vec(const json& a) {
  if (!a.is_array()) throw FormatError("expected a numeric array");
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw FormatError("expected a numeric array");
    v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  }
  return v;
}

inline std::string trajectory_line(const Trajectory& tr) {
  json j;
  if (tr.continuous()) {
    json o = json::array();
    for (const auto& v : tr.obs_vec) o.push_back(vec_json(v));
    j["obs"] = o;
    json s = json::array();
    for (const auto& v : tr.states_vec) s.push_back(vec_json(v));
    j["states"] = s;
  } else {
    j["obs"] = tr.obs;
    if (!tr.states.empty()) {
      j["states"] = tr.states;
    } else {
      json s = json::array();
      for (const auto& v : tr.states_vec) s.push_back(vec_json(v));
      j["states"] = s;
    }
  }
  json t = json::array();
  for (const auto& v : tr.targets) t.push_back(vec_json(v));
  j["targets"] = t;
  j["kind"] = to_string(tr.kind);
  return j.dump();
}

inline Trajectory trajectory_from_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("trajectory record is not valid JSON: ") + e.what());
  }
  Trajectory tr;
  try {
    tr.kind = target_kind_from_string(j.at("kind").get<std::string>());
    const json& obs = j.at("obs");
    const json& states = j.at("states");
    if (!obs.empty() && obs[0].is_array()) {
      for (const auto& v : obs) tr.obs_vec.push_back(json_vec(v));
    } else {
      tr.obs = obs.get<std::vector<int>>();
    }
    if (!states.empty() && states[0].is_array()) {
      for (const auto& v : states) tr.states_vec.push_back(json_vec(v));
    } else {
      tr.states = states.get<std::vector<int>>();
    }
    for (const auto& v : j.at("targets")) tr.targets.push_back(json_vec(v));
  } catch (const json::exception& e) {
    throw FormatError(std::string("trajectory record has the wrong shape: ") + e.what());
  }
  return tr;
}

inline std::string trajectories_jsonl(const std::vector<Trajectory>& trs) {
  std::string s;
  for (const auto& tr : trs) s += trajectory_line(tr) + "\n";
  return s;
}

inline std::vector<Trajectory> parse_jsonl(const std::string& text) {
  std::vector<Trajectory> out;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(trajectory_from_line(line));
    } catch (const FormatError& e) {
      throw FormatError("record " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---- network checkpoints ---------------------------------------------------

template <typename Net>
void add_tensors(TextDoc& d, const Net& net, const std::string& prefix = "") {
  net.visit([&](const std::string& name, const auto& m) { d.add(prefix + name, Matrix(m)); });
}

template <typename Net>
void read_tensors(const TextDoc& d, Net& net, const std::string& prefix = "") {
  net.visit([&](const std::string& name, auto& m) {
    const Matrix& t = d.tensor(prefix + name, m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t(i, j);
  });
}

inline void set_tf_config(TextDoc& d, const nn::TransformerConfig& c) {
  d.set("in_dim", c.in_dim);
  d.set("d", c.d);
  d.set("heads", c.heads);
  d.set("layers", c.layers);
  d.set("width", c.width);
  d.set("out_dim", c.out_dim);
  d.set("max_len", c.max_len);
  d.set("act", nn::to_string(c.act));
  d.set("pre_ln", c.pre_ln);
  d.set("final_ln", c.final_ln);
  d.set("learned_pe", c.learned_pe);
  d.set("residual_attn", c.residual_attn);
  d.set("residual_mlp", c.residual_mlp);
  d.set("dropout", c.dropout);
}

inline nn::TransformerConfig get_tf_config(const TextDoc& d) {
  nn::TransformerConfig c;
  c.in_dim = d.get_int("in_dim");
  c.d = d.get_int("d");
  c.heads = d.get_int("heads");
  c.layers = d.get_int("layers");
  c.width = d.get_int("width");
  c.out_dim = d.get_int("out_dim");
  c.max_len = d.get_int("max_len");
  c.act = nn::activation_from_string(d.get("act"));
  c.pre_ln = d.get_bool("pre_ln");
  c.final_ln = d.get_bool("final_ln");
  c.learned_pe = d.get_bool("learned_pe");
  c.residual_attn = d.get_bool("residual_attn");
  c.residual_mlp = d.get_bool("residual_mlp");
  c.dropout = d.get_double("dropout");
  try {
    c.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid transformer config: ") + e.what());
  }
  return c;
}

inline TextDoc checkpoint_doc(const train::Network& net) {
  TextDoc d;
  d.kind = "checkpoint";
  d.set("net", train::to_string(net.kind()));
  d.set("obs_dim", net.enc.obs_dim);
  d.set("belief_dim", net.enc.belief_dim);
  d.set("loss", train::to_string(net.loss));
  if (net.kind() == train::NetKind::rnn) {
    const auto& w = net.rnn();
    d.set("in_dim", static_cast<long>(w.input_dim()));
    d.set("hidden", static_cast<long>(w.hidden()));
    d.set("out_dim", static_cast<long>(w.output_dim()));
    add_tensors(d, w);
  } else {
    set_tf_config(d, net.transformer().cfg);
    add_tensors(d, net.transformer());
  }
  return d;
}

inline train::Network network_from_doc(const TextDoc& d) {
  d.expect_kind("checkpoint");
  train::Network net;
  net.enc = {d.get_int("obs_dim"), d.get_int("belief_dim")};
  net.loss = train::loss_kind_from_string(d.get("loss"));
  if (train::net_kind_from_string(d.get("net")) == train::NetKind::rnn) {
    auto w = nn::RnnWeights::zeros(d.get_long("in_dim"), d.get_long("hidden"), d.get_long("out_dim"));
    read_tensors(d, w);
    net.body = std::move(w);
  } else {
    auto w = nn::TransformerWeights::zeros(get_tf_config(d));
    read_tensors(d, w);
    net.body = std::move(w);
  }
  if (net.enc.dim() != (net.kind() == train::NetKind::rnn ? net.rnn().input_dim() : net.transformer().cfg.in_dim))
    throw FormatError("checkpoint input encoding does not match the network input width");
  return net;
}

// ---- constructions ----------------------------------------------------------

inline void add_system(TextDoc& d, const construct::LinearSystem& s) {
  d.set("sys_n", s.n);
  d.set("sys_m", s.m);
  d.set("sys_normalized", s.normalized);
  for (int o = 0; o < s.m; ++o) d.add("sys.A" + std::to_string(o), s.A[static_cast<std::size_t>(o)]);
  d.add("sys.s0", col(s.s0));
}

inline construct::LinearSystem get_system(const TextDoc& d) {
  construct::LinearSystem s;
  s.n = d.get_int("sys_n");
  s.m = d.get_int("sys_m");
  s.normalized = d.get_bool("sys_normalized");
  for (int o = 0; o < s.m; ++o) s.A.push_back(d.tensor("sys.A" + std::to_string(o), s.n, s.n));
  s.s0 = d.tensor("sys.s0", s.n, 1);
  return s;
}

inline void add_tf_construction(TextDoc& d, const construct::Tf2Construction& c) {
  const auto& p = c.params;
  d.set("T", p.T);
  d.set("n", p.n);
  d.set("L", p.L);
  d.set("gamma", p.gamma);
  d.set("eta", p.eta);
  d.set("lambda", p.lambda);
  d.set("relu_sim_scale", p.relu_sim_scale);
  d.set("mlp_eps", p.mlp_eps);
  d.set("grid_error", p.grid_error);
  d.set("mlp_width", static_cast<long>(p.mlp_width));
  d.set("belief_channel", c.input.belief_channel);
  set_tf_config(d, c.weights.cfg);
  add_tensors(d, c.weights, "tf.");
  add_system(d, c.system);
}

inline construct::Tf2Construction get_tf_construction(const TextDoc& d) {
  construct::Tf2Construction c;
  auto& p = c.params;
  p.T = d.get_int("T");
  p.n = d.get_int("n");
  p.L = d.get_int("L");
  p.gamma = d.get_double("gamma");
  p.eta = d.get_double("eta");
  p.lambda = d.get_double("lambda");
  p.relu_sim_scale = d.get_double("relu_sim_scale");
  p.mlp_eps = d.get_double("mlp_eps");
  p.grid_error = d.get_double("grid_error");
  p.mlp_width = d.get_long("mlp_width");
  p.reach_start = d.get_bool("belief_channel");
  c.system = get_system(d);
  c.layout = {c.system.n};
  c.input = {c.system.m, c.system.n, d.get_bool("belief_channel")};
  c.weights = nn::TransformerWeights::zeros(get_tf_config(d));
  read_tensors(d, c.weights, "tf.");
  c.mlp.product.lambda = p.lambda;
  c.mlp.product.grid_error = p.grid_error;
  c.mlp.width = p.mlp_width;
  try {
    p.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid construction parameters: ") + e.what());
  }
  if (c.weights.cfg.d != c.layout.dim() || c.weights.cfg.in_dim != c.input.dim())
    throw FormatError("construction weights do not match the recorded layout");
  return c;
}

inline void add_stack(TextDoc& d, const construct::DenseStack& s, const std::string& prefix) {
  d.set(prefix + "depth", static_cast<long>(s.layers.size()));
  std::string acts;
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const auto& L = s.layers[i];
    d.add(prefix + std::to_string(i) + ".W", L.W);
    d.add(prefix + std::to_string(i) + ".b", col(L.b));
    acts += (i ? "," : "") + std::string(nn::to_string(L.act));
  }
  d.set(prefix + "acts", acts);
}

inline construct::DenseStack get_stack(const TextDoc& d, const std::string& prefix) {
  construct::DenseStack s;
  const long depth = d.get_long(prefix + "depth");
  std::vector<std::string> acts;
  std::string cur;
  for (char ch : d.get(prefix + "acts") + ",") {
    if (ch == ',') {
      if (!cur.empty()) acts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (static_cast<long>(acts.size()) != depth) throw FormatError("layer activation list does not match depth");
  for (long i = 0; i < depth; ++i) {
    construct::DenseLayer L;
    L.W = d.tensor(prefix + std::to_string(i) + ".W");
    const Matrix& b = d.tensor(prefix + std::to_string(i) + ".b", L.W.rows(), 1);
    L.b = b;
    L.act = nn::activation_from_string(acts[static_cast<std::size_t>(i)]);
    s.layers.push_back(std::move(L));
  }
  return s;
}

enum class Theorem { rnn, tf, norm };

inline const char* to_string(Theorem t) {
  switch (t) {
    case Theorem::rnn: return "rnn";
    case Theorem::tf: return "tf";
    case Theorem::norm: return "norm";
  }
  return "?";
}

inline Theorem theorem_from_string(const std::string& s) {
  if (s == "rnn") return Theorem::rnn;
  if (s == "tf") return Theorem::tf;
  if (s == "norm") return Theorem::norm;
  throw ParameterError("unknown construction '" + s + "' (expected rnn, tf or norm)");
}

inline TextDoc rnn_construction_doc(const construct::RnnConstruction& c, const construct::LinearSystem& sys) {
  TextDoc d;
  d.kind = "construction";
  d.set("theorem", "rnn");
  d.set("alpha", c.alpha);
  d.set("hidden", static_cast<long>(c.weights.hidden()));
  add_tensors(d, c.weights, "rnn.");
  add_system(d, sys);
  return d;
}

inline TextDoc tf_construction_doc(const construct::Tf2Construction& c) {
  TextDoc d;
  d.kind = "construction";
  d.set("theorem", "tf");
  add_tf_construction(d, c);
  return d;
}

inline TextDoc norm_construction_doc(const construct::StochasticPipeline& p, double c_l) {
  TextDoc d;
  d.kind = "construction";
  d.set("theorem", "norm");
  add_tf_construction(d, p.tf);
  const auto& w = p.norm;
  d.set("c_l", c_l);
  d.set("norm_k", w.k);
  d.set("norm_stages", static_cast<long>(w.stages.size()));
  d.set("norm_initial_upper", w.initial_upper);
  d.set("norm_final_upper", w.final_upper);
  d.set("norm_final_lower", w.final_lower);
  d.set("norm_lambda", w.product.lambda);
  add_stack(d, w.phase1, "p1.");
  add_stack(d, w.phase2, "p2.");
  return d;
}

inline Theorem construction_theorem(const TextDoc& d) {
  d.expect_kind("construction");
  return theorem_from_string(d.get("theorem"));
}

inline construct::RnnConstruction get_rnn_construction(const TextDoc& d) {
  construct::RnnConstruction c;
  c.alpha = d.get_double("alpha");
  const auto sys = get_system(d);
  c.weights = nn::RnnWeights::zeros(sys.m, d.get_long("hidden"), sys.n);
  read_tensors(d, c.weights, "rnn.");
  return c;
}

inline construct::StochasticPipeline get_norm_construction(const TextDoc& d) {
  construct::StochasticPipeline p;
  p.tf = get_tf_construction(d);
  p.norm.phase1 = get_stack(d, "p1.");
  p.norm.phase2 = get_stack(d, "p2.");
  p.norm.k = d.get_int("norm_k");
  p.norm.initial_upper = d.get_double("norm_initial_upper");
  p.norm.final_upper = d.get_double("norm_final_upper");
  p.norm.final_lower = d.get_double("norm_final_lower");
  p.norm.product.lambda = d.get_double("norm_lambda");
  return p;
}

inline TextDoc report_doc(const construct::ConstructionReport& r) {
  TextDoc d;
  d.kind = "construction_report";
  d.set("final_error", r.final_error);
  d.set("final_bound", r.final_bound);
  d.set("eta", r.eta);
  d.set("layers_ok", r.layers_ok);
  d.set("attention_ok", r.attention_ok);
  d.set("final_ok", r.final_ok);
  d.set("ok", r.ok());
  Matrix layers(static_cast<Eigen::Index>(r.per_layer_error.size()), 2);
  for (std::size_t l = 0; l < r.per_layer_error.size(); ++l) {
    layers(static_cast<Eigen::Index>(l), 0) = r.per_layer_error[l];
    layers(static_cast<Eigen::Index>(l), 1) = r.bound[l];
  }
  d.add("layer_error_bound", layers);
  Matrix att(static_cast<Eigen::Index>(r.attention_one_hot_gap.size()), 1);
  for (std::size_t l = 0; l < r.attention_one_hot_gap.size(); ++l) att(static_cast<Eigen::Index>(l), 0) = r.attention_one_hot_gap[l];
  d.add("attention_gap", att);
  return d;
}

// ---- evaluation reports -------------------------------------------------------

inline std::string eval_csv(const eval::EvalReport& r) {
  std::string s = "step,mean_loss,count\n";
  for (std::size_t t = 0; t < r.per_step_loss.size(); ++t)
    s += std::to_string(t + 1) + "," + (eval::absent(r.per_step_loss[t]) ? std::string() : fmt17(r.per_step_loss[t])) + "," +
         std::to_string(r.count[t]) + "\n";
  return s;
}

inline json eval_summary(const eval::EvalReport& r, const json& config = json::object()) {
  json j;
  j["format_version"] = kFormatVersion;
  j["E"] = r.E;
  j["T"] = r.T;
  j["mask"] = eval::to_string(r.mask);
  j["norm_p"] = r.norm.p;
  j["relative"] = r.norm.relative;
  j["fit_rule"] = r.fit_rule;
  json fl = json::object();
  for (const auto& [e, len] : r.fit_lengths) fl[fmt17(e)] = len;
  j["fit_lengths"] = fl;
  j["config"] = config;
  return j;
}

}  // namespace hmmlab::io
