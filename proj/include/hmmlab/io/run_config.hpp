#pragma once

#include "hmmlab/io/artifacts.hpp"

#include <string>

namespace hmmlab::io {

inline json spec_json(const ModelSpec& s) {
  return {{"kind", to_string(s.kind)}, {"n", s.n},       {"m", s.m},     {"seed", s.seed},
          {"eps", s.eps},              {"alpha", s.alpha}, {"T", s.T},     {"lds_scale", s.lds_scale}};
}

inline ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.kind = model_kind_from_string(j.at("kind").get<std::string>());
  s.n = j.at("n").get<int>();
  s.m = j.at("m").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.eps = j.at("eps").get<double>();
  s.alpha = j.at("alpha").get<double>();
  s.T = j.at("T").get<int>();
  s.lds_scale = j.at("lds_scale").get<double>();
  return s;
}

inline json tf_config_json(const nn::TransformerConfig& c) {
  return {{"d", c.d},
          {"heads", c.heads},
          {"layers", c.layers},
          {"width", c.width},
          {"max_len", c.max_len},
          {"act", nn::to_string(c.act)},
          {"pre_ln", c.pre_ln},
          {"final_ln", c.final_ln},
          {"learned_pe", c.learned_pe},
          {"residual_attn", c.residual_attn},
          {"residual_mlp", c.residual_mlp},
          {"dropout", c.dropout}};
}

inline nn::TransformerConfig tf_config_from_json(const json& j) {
  nn::TransformerConfig c;
  c.d = j.at("d").get<int>();
  c.heads = j.at("heads").get<int>();
  c.layers = j.at("layers").get<int>();
  c.width = j.at("width").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.act = nn::activation_from_string(j.at("act").get<std::string>());
  c.pre_ln = j.at("pre_ln").get<bool>();
  c.final_ln = j.at("final_ln").get<bool>();
  c.learned_pe = j.at("learned_pe").get<bool>();
  c.residual_attn = j.at("residual_attn").get<bool>();
  c.residual_mlp = j.at("residual_mlp").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

inline json train_config_json(const train::TrainConfig& c) {
  json j;
  j["net"] = {{"kind", train::to_string(c.net.kind)},
              {"rnn_hidden", c.net.rnn_hidden},
              {"tf", tf_config_json(c.net.tf)},
              {"belief_channel", c.net.belief_channel},
              {"init_seed", c.net.init_seed}};
  j["plan"] = {{"lengths", c.plan.lengths}, {"epochs", c.plan.epochs}};
  j["batch"] = c.batch;
  j["seed"] = c.seed;
  j["schedule"] = {{"start", c.schedule.start},
                   {"base", c.schedule.base},
                   {"warmup_steps", c.schedule.warmup_steps},
                   {"decay", c.schedule.decay},
                   {"decay_every", c.schedule.decay_every}};
  j["adamw"] = {{"beta1", c.adamw.beta1}, {"beta2", c.adamw.beta2}, {"eps", c.adamw.eps}, {"weight_decay", c.adamw.weight_decay}};
  j["grad_clip"] = c.grad_clip;
  j["block"] = c.block;
  j["eval_E"] = c.eval_E;
  j["eval_seed"] = c.eval_seed;
  j["eval_every"] = c.eval_every;
  j["probe_steps"] = c.probe_steps;
  j["eps_list"] = c.eps_list;
  j["stop_eps"] = c.stop_eps;
  return j;
}

inline train::TrainConfig train_config_from_json(const json& j) {
  train::TrainConfig c;
  const json& n = j.at("net");
  c.net.kind = train::net_kind_from_string(n.at("kind").get<std::string>());
  c.net.rnn_hidden = n.at("rnn_hidden").get<int>();
  c.net.tf = tf_config_from_json(n.at("tf"));
  c.net.belief_channel = n.at("belief_channel").get<bool>();
  c.net.init_seed = n.at("init_seed").get<std::uint64_t>();
  c.plan.lengths = j.at("plan").at("lengths").get<std::vector<int>>();
  c.plan.epochs = j.at("plan").at("epochs").get<std::vector<int>>();
  c.batch = j.at("batch").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const json& s = j.at("schedule");
  c.schedule.start = s.at("start").get<double>();
  c.schedule.base = s.at("base").get<double>();
  c.schedule.warmup_steps = s.at("warmup_steps").get<long>();
  c.schedule.decay = s.at("decay").get<double>();
  c.schedule.decay_every = s.at("decay_every").get<int>();
  const json& a = j.at("adamw");
  c.adamw.beta1 = a.at("beta1").get<double>();
  c.adamw.beta2 = a.at("beta2").get<double>();
  c.adamw.eps = a.at("eps").get<double>();
  c.adamw.weight_decay = a.at("weight_decay").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.block = j.at("block").get<int>();
  c.eval_E = j.at("eval_E").get<int>();
  c.eval_seed = j.at("eval_seed").get<std::uint64_t>();
  c.eval_every = j.at("eval_every").get<int>();
  c.probe_steps = j.at("probe_steps").get<std::vector<int>>();
  c.eps_list = j.at("eps_list").get<std::vector<double>>();
  c.stop_eps = j.at("stop_eps").get<double>();
  return c;
}

// Dataset recipe: regenerate from a model spec, or point at files on disk.
struct DataSource {
  ModelSpec spec;
  int T = 0;
  std::size_t count = 0;
  std::uint64_t data_seed = 0;
  std::string path;  // non-empty: load model.txt + trajectories.jsonl from here
};

inline json data_source_json(const DataSource& d) {
  if (!d.path.empty()) return {{"path", d.path}};
  return {{"spec", spec_json(d.spec)}, {"T", d.T}, {"count", d.count}, {"data_seed", d.data_seed}};
}

inline DataSource data_source_from_json(const json& j) {
  DataSource d;
  if (j.contains("path")) {
    d.path = j.at("path").get<std::string>();
    return d;
  }
  d.spec = spec_from_json(j.at("spec"));
  d.T = j.at("T").get<int>();
  d.count = j.at("count").get<std::size_t>();
  d.data_seed = j.at("data_seed").get<std::uint64_t>();
  return d;
}

inline train::Dataset load_dataset_dir(const std::string& dir) {
  train::Dataset ds;
  ds.model = model_from_doc(load_doc(dir + "/model.txt"));
  ds.trajectories = parse_jsonl(read_file(dir + "/trajectories.jsonl"));
  return ds;
}

inline train::Dataset materialize(const DataSource& src) {
  if (!src.path.empty()) return load_dataset_dir(src.path);
  return train::make_dataset(make_model(src.spec), src.T, src.count, src.data_seed);
}

// Everything needed to rerun a training job from scratch.
inline json train_run_json(const DataSource& src, const train::TrainConfig& cfg) {
  return {{"format_version", kFormatVersion}, {"command", "train"}, {"data", data_source_json(src)}, {"train", train_config_json(cfg)}};
}

}  // namespace hmmlab::io
