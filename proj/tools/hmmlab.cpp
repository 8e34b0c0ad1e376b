// hmmlab command-line driver. Exit codes: 0 success, 1 verification or run
// failure, 2 usage/schema error, 3 IO error.
#include "hmmlab/io/run_config.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hmmlab;
using io::json;

namespace {

struct VerificationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by every command that needs a model.
struct ModelArgs {
  std::string path;
  std::string kind = "hmm";
  int n = 5;
  int m = 5;
  std::uint64_t seed = 0;
  double eps = 0.01;
  double alpha = 0.0;
  double lds_scale = 1.0;

  std::vector<CLI::Option*> opts;

  void add(CLI::App* c) {
    opts = {c->add_option("--model", path, "Model manifest (overrides the generation flags)"),
            c->add_option("--model-kind", kind, "hmm, matmul, lds, cyclic_det, cyclic_rnd, cyclic_hard"),
            c->add_option("--n", n, "State count (base states for the cyclic families)"),
            c->add_option("--m", m, "Observation / action count"),
            c->add_option("--seed", seed, "Model seed"),
            c->add_option("--rnd-eps", eps, "Back-step probability for cyclic_rnd"),
            c->add_option("--alpha", alpha, "Stage-switch probability for cyclic_hard (0 selects 1/T)"),
            c->add_option("--lds-scale", lds_scale, "Scale of the LDS transition matrix")};
  }

  // True when any model flag appeared on the command line.
  bool given() const {
    for (const auto* o : opts)
      if (o->count() > 0) return true;
    return false;
  }

  ModelSpec spec(int T) const {
    ModelSpec s;
    s.kind = model_kind_from_string(kind);
    s.n = n;
    s.m = m;
    s.seed = seed;
    s.eps = eps;
    s.alpha = alpha;
    s.T = T;
    s.lds_scale = lds_scale;
    return s;
  }

  ModelInstance load(int T) const {
    if (!path.empty()) return io::model_from_doc(io::load_doc(path));
    return make_model(spec(T));
  }

  json echo(int T) const {
    if (!path.empty()) return {{"path", path}};
    return io::spec_json(spec(T));
  }

  static ModelInstance from_echo(const json& j) {
    if (j.contains("path")) return io::model_from_doc(io::load_doc(j.at("path").get<std::string>()));
    return make_model(io::spec_from_json(j));
  }
};

std::string out_dir(const std::string& given, const std::string& cmd) {
  std::string dir = given;
  if (dir.empty()) {
    const char* root = std::getenv("HMMLAB_OUT");
    dir = std::string(root && *root ? root : "hmmlab_out") + "/" + cmd;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

void write_config(const std::string& dir, json j) {
  j["format_version"] = io::kFormatVersion;
  io::write_file(dir + "/run_config.json", j.dump(2) + "\n");
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size()) throw ParameterError("cannot parse integer list '" + s + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string vec_str(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + io::fmt17(v(i));
  return s;
}

void print_report(const eval::EvalReport& r) {
  for (const auto& [e, len] : r.fit_lengths) std::printf("fit_length eps=%g: %d / %d\n", e, len, r.T);
}

void save_eval(const std::string& dir, const eval::EvalReport& r, const json& config) {
  io::write_file(dir + "/eval.csv", io::eval_csv(r));
  io::write_file(dir + "/eval.json", io::eval_summary(r, config).dump(2) + "\n");
}

// ---- gen -------------------------------------------------------------------

struct GenArgs {
  ModelArgs model;
  int T = 120;
  std::size_t count = 1000;
  std::uint64_t data_seed = 0;
  bool data_seed_set = false;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  const ModelInstance mi = a.model.load(a.T);
  const std::uint64_t ds = a.data_seed_set ? a.data_seed : stream_key(a.model.seed, 0x64617461ULL);
  const train::Dataset data = train::make_dataset(mi, a.T, a.count, ds);
  const std::string dir = out_dir(a.out, "gen");
  const std::string manifest = io::to_text(io::model_doc(mi));
  const std::string records = io::trajectories_jsonl(data.trajectories);
  io::write_file(dir + "/model.txt", manifest);
  io::write_file(dir + "/trajectories.jsonl", records);
  write_config(dir, {{"command", "gen"}, {"model", a.model.echo(a.T)}, {"T", a.T}, {"count", a.count}, {"data_seed", ds}});
  std::printf("wrote %zu trajectories of length %d to %s\n", a.count, a.T, dir.c_str());
  std::printf("digest %s\n", io::hex64(io::fnv1a(records, io::fnv1a(manifest))).c_str());
  return 0;
}

// ---- rollout / filter ----------------------------------------------------------

struct RolloutArgs {
  ModelArgs model;
  int T = 120;
  std::uint64_t data_seed = 0;
  std::uint64_t index = 0;
  std::size_t count = 1;
};

int cmd_rollout(const RolloutArgs& a) {
  const ModelInstance mi = a.model.load(a.T);
  for (std::size_t i = 0; i < a.count; ++i)
    std::printf("%s\n", io::trajectory_line(rollout(mi, a.T, a.data_seed, default_target(mi.kind), a.index + i)).c_str());
  return 0;
}

struct FilterArgs {
  ModelArgs model;
  std::string obs;
  std::string target;
  bool brute = false;
};

int cmd_filter(const FilterArgs& a) {
  const std::vector<int> obs = parse_ints(a.obs);
  const ModelInstance mi = a.model.load(static_cast<int>(std::max<std::size_t>(obs.size(), 2)));
  if (mi.kind == ModelKind::lds) throw TaskError("filter takes discrete observations; use rollout for LDS");
  const TargetKind kind = a.target.empty() ? default_target(mi.kind) : target_kind_from_string(a.target);
  Trajectory tr;
  tr.obs = obs;
  const auto targets = compute_targets(mi, tr, kind);
  for (std::size_t t = 0; t < targets.size(); ++t) std::printf("%zu,%s\n", t + 1, vec_str(targets[t]).c_str());
  if (a.brute) {
    if (!mi.is_hmm() || kind != TargetKind::belief) throw TaskError("brute-force check needs an HMM-shaped model and belief targets");
    const auto bf = brute_force_posterior(mi.hmm(), obs);
    double gap = 0.0;
    for (std::size_t t = 0; t < bf.size(); ++t) gap = std::max(gap, linf_gap(bf[t], targets[t]));
    std::printf("brute_force_gap %s\n", io::fmt17(gap).c_str());
  }
  return 0;
}

// ---- construct / verify ------------------------------------------------------

struct ConstructArgs {
  ModelArgs model;
  std::string theorem = "tf";
  int T = 16;
  bool belief_channel = false;
  double mlp_eps = 0.0;
  std::string out;
};

double hmm_entry_floor(const HmmInstance& h) { return std::min(h.P.minCoeff(), h.O.minCoeff()); }

int cmd_construct(const ConstructArgs& a) {
  const ModelInstance mi = a.model.load(a.T);
  const io::Theorem th = io::theorem_from_string(a.theorem);
  const std::string dir = out_dir(a.out, "construct");
  io::TextDoc doc;
  json echo = {{"command", "construct"}, {"model", a.model.echo(a.T)}, {"theorem", a.theorem}, {"T", a.T},
               {"belief_channel", a.belief_channel}, {"mlp_eps", a.mlp_eps}};
  if (th == io::Theorem::rnn) {
    const auto sys = construct::linear_system(mi);
    const auto c = construct::build_rnn_theorem1(sys);
    doc = io::rnn_construction_doc(c, sys);
    std::printf("rnn construction: hidden %ld, alpha %s\n", static_cast<long>(c.weights.hidden()), io::fmt17(c.alpha).c_str());
  } else if (th == io::Theorem::tf) {
    construct::Tf2Options opt;
    opt.belief_channel = a.belief_channel;
    opt.mlp_eps = a.mlp_eps;
    const auto c = construct::build_tf_theorem2(mi, a.T, opt);
    doc = io::tf_construction_doc(c);
    const auto& p = c.params;
    std::printf("tf construction: T %d, L %d layers, d %d, gamma %s, eta %s, lambda %s, mlp width %ld\n", p.T, p.L,
                c.weights.cfg.d, io::fmt17(p.gamma).c_str(), io::fmt17(p.eta).c_str(), io::fmt17(p.lambda).c_str(),
                static_cast<long>(p.mlp_width));
  } else {
    if (!mi.is_hmm()) throw UnsupportedModelError("the normalization pipeline needs an HMM-shaped model");
    const double floor = hmm_entry_floor(mi.hmm());
    const auto p = construct::build_stochastic_pipeline(mi.hmm(), a.T, a.mlp_eps > 0.0 ? a.mlp_eps : 1e-6);
    doc = io::norm_construction_doc(p, floor * floor);
    std::printf("norm construction: c_l %s, tf layers %d, phase 1: %zu stages / %zu layers, phase 2: k %d / %zu layers\n",
                io::fmt17(floor * floor).c_str(), p.tf.params.L, p.norm.stages.size(), p.norm.phase1.depth(), p.norm.k,
                p.norm.phase2.depth());
  }
  doc.set("model", a.model.echo(a.T).dump());
  io::save_doc(dir + "/construction.txt", doc);
  write_config(dir, echo);
  std::printf("wrote %s/construction.txt\n", dir.c_str());
  return 0;
}

struct VerifyArgs {
  ModelArgs model;
  std::string construction;
  int T = 0;
  int count = 16;
  std::uint64_t data_seed = 7;
  double tol = 1e-4;
  std::string out;
};

void require_same_system(const construct::LinearSystem& a, const construct::LinearSystem& b) {
  bool same = a.n == b.n && a.m == b.m && a.s0.size() == b.s0.size();
  for (int o = 0; same && o < a.m; ++o) same = a.A[static_cast<std::size_t>(o)] == b.A[static_cast<std::size_t>(o)];
  if (!same) throw ValidationError("construction was not built from this model");
}

int cmd_verify(const VerifyArgs& a) {
  const io::TextDoc doc = io::load_doc(a.construction);
  const io::Theorem th = io::construction_theorem(doc);
  const auto stored = io::get_system(doc);
  const int T = a.T > 0 ? a.T : (doc.has("T") ? doc.get_int("T") : 120);
  // Without model flags, verify against the model the construction records.
  const ModelInstance mi =
      !a.model.given() && doc.has("model") ? ModelArgs::from_echo(json::parse(doc.get("model"))) : a.model.load(T);
  const std::string dir = out_dir(a.out, "verify");
  bool ok = true;
  if (th == io::Theorem::rnn) {
    require_same_system(stored, construct::linear_system(mi));
    const auto c = io::get_rnn_construction(doc);
    double worst = 0.0;
    for (int i = 0; i < a.count; ++i) {
      const auto tr = rollout(mi, T, a.data_seed, default_target(mi.kind), static_cast<std::uint64_t>(i));
      const auto rep = construct::verify_rnn(c, stored, tr.obs);
      worst = std::max(worst, rep.final_error);
      ok = ok && rep.ok;
    }
    std::printf("rnn construction: worst final error %s over %d rollouts (bound 1e-9): %s\n", io::fmt17(worst).c_str(),
                a.count, ok ? "PASS" : "FAIL");
    io::TextDoc r;
    r.kind = "construction_report";
    r.set("theorem", "rnn");
    r.set("final_error", worst);
    r.set("ok", ok);
    io::save_doc(dir + "/report.txt", r);
  } else if (th == io::Theorem::tf) {
    const auto c = io::get_tf_construction(doc);
    require_same_system(stored, construct::linear_system(mi));
    if (T > c.params.T) throw ParameterError("verification length exceeds the construction horizon");
    construct::ConstructionReport worst;
    for (int i = 0; i < a.count; ++i) {
      const auto tr = rollout(mi, T, a.data_seed, default_target(mi.kind), static_cast<std::uint64_t>(i));
      const Vector init = train::initial_belief(mi);
      const auto rep = construct::verify_construction(c, tr.obs, c.input.belief_channel ? &init : nullptr);
      if (i == 0) {
        worst = rep;
      } else {
        for (std::size_t l = 0; l < rep.per_layer_error.size(); ++l)
          worst.per_layer_error[l] = std::max(worst.per_layer_error[l], rep.per_layer_error[l]);
        for (std::size_t l = 0; l < rep.attention_one_hot_gap.size(); ++l)
          worst.attention_one_hot_gap[l] = std::max(worst.attention_one_hot_gap[l], rep.attention_one_hot_gap[l]);
        worst.final_error = std::max(worst.final_error, rep.final_error);
        worst.layers_ok = worst.layers_ok && rep.layers_ok;
        worst.attention_ok = worst.attention_ok && rep.attention_ok;
        worst.final_ok = worst.final_ok && rep.final_ok;
      }
    }
    std::printf("%-6s %-24s %-24s %s\n", "layer", "error", "bound", "status");
    for (std::size_t l = 0; l < worst.per_layer_error.size(); ++l)
      std::printf("%-6zu %-24s %-24s %s\n", l, io::fmt17(worst.per_layer_error[l]).c_str(), io::fmt17(worst.bound[l]).c_str(),
                  worst.per_layer_error[l] <= worst.bound[l] ? "pass" : "FAIL");
    std::printf("final  %-24s %-24s %s\n", io::fmt17(worst.final_error).c_str(), io::fmt17(worst.final_bound).c_str(),
                worst.final_ok ? "pass" : "FAIL");
    std::printf("attention one-hot gaps within eta %s: %s\n", io::fmt17(worst.eta).c_str(), worst.attention_ok ? "pass" : "FAIL");
    ok = worst.ok();
    io::save_doc(dir + "/report.txt", io::report_doc(worst));
  } else {
    if (!mi.is_hmm()) throw UnsupportedModelError("the normalization pipeline needs an HMM-shaped model");
    require_same_system(stored, construct::linear_system_unnormalized(mi.hmm()));
    const auto p = io::get_norm_construction(doc);
    if (T > p.tf.params.T) throw ParameterError("verification length exceeds the construction horizon");
    double worst = 0.0;
    for (int i = 0; i < a.count; ++i) {
      const auto tr = rollout(mi, T, a.data_seed, TargetKind::belief, static_cast<std::uint64_t>(i));
      const auto got = construct::run_stochastic_pipeline(p, tr.obs);
      for (std::size_t t = 0; t < got.size(); ++t) worst = std::max(worst, linf_gap(got[t], tr.targets[t]));
    }
    ok = worst <= a.tol;
    std::printf("normalization pipeline: worst belief error %s over %d rollouts (tolerance %g): %s\n", io::fmt17(worst).c_str(),
                a.count, a.tol, ok ? "PASS" : "FAIL");
    io::TextDoc r;
    r.kind = "construction_report";
    r.set("theorem", "norm");
    r.set("final_error", worst);
    r.set("tolerance", a.tol);
    r.set("ok", ok);
    io::save_doc(dir + "/report.txt", r);
  }
  if (!ok) throw VerificationFailed("construction bounds do not hold");
  return 0;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  ModelArgs model;
  std::string config;
  std::string data;
  int T = 120;
  std::size_t count = 1000;
  std::uint64_t data_seed = 0;
  bool data_seed_set = false;
  std::string net = "transformer";
  int dim = 64;
  int heads = 2;
  int layers = 2;
  int width = 0;
  int hidden = 64;
  double dropout = 0.1;
  int epochs = 10;
  int batch = 64;
  std::uint64_t train_seed = 0;
  int curriculum = 0;
  int block = 0;
  int eval_E = 256;
  std::string eps = "0.05,0.1";
  double stop_eps = 0.0;
  double grad_clip = 0.0;
  long warmup = 4000;
  std::string out;
};

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(io::detail::parse_double(tok, "list '" + s + "'"));
  if (out.empty()) throw ParameterError("empty threshold list");
  return out;
}

int cmd_train(const TrainArgs& a) {
  io::DataSource src;
  train::TrainConfig cfg;
  if (!a.config.empty()) {
    const json j = json::parse(io::read_file(a.config));
    if (j.value("command", std::string()) != "train") throw FormatError("run config is not a train config");
    src = io::data_source_from_json(j.at("data"));
    cfg = io::train_config_from_json(j.at("train"));
  } else {
    if (!a.data.empty()) {
      src.path = a.data;
    } else {
      src.spec = a.model.spec(a.T);
      src.T = a.T;
      src.count = a.count;
      src.data_seed = a.data_seed_set ? a.data_seed : stream_key(a.model.seed, 0x64617461ULL);
    }
    cfg.net.kind = train::net_kind_from_string(a.net);
    cfg.net.rnn_hidden = a.hidden;
    cfg.net.tf.d = a.dim;
    cfg.net.tf.heads = a.heads;
    cfg.net.tf.layers = a.layers;
    cfg.net.tf.width = a.width > 0 ? a.width : 4 * a.dim;
    cfg.net.tf.dropout = a.dropout;
    cfg.net.belief_channel = a.block > 0;
    cfg.net.init_seed = a.train_seed + 1;
    cfg.batch = a.batch;
    cfg.seed = a.train_seed;
    cfg.block = a.block;
    cfg.eval_E = a.eval_E;
    cfg.eps_list = parse_doubles(a.eps);
    cfg.stop_eps = a.stop_eps;
    cfg.grad_clip = a.grad_clip;
    cfg.schedule.warmup_steps = a.warmup;
  }
  const train::Dataset data = io::materialize(src);
  const int T = data.horizon();
  if (a.config.empty()) {
    cfg.plan = a.curriculum > 0 ? train::curriculum_plan(a.curriculum, T, a.epochs) : train::flat_plan(T, a.epochs);
    cfg.probe_steps = train::default_probes(T);
  }
  const std::string dir = out_dir(a.out, "train");
  write_config(dir, io::train_run_json(src, cfg));
  const train::TrainResult res = train::train_network(data, cfg, [](const train::EpochMetrics& e) {
    std::printf("epoch %d  length %d  loss %.6g", e.epoch, e.stage_length, e.train_loss);
    if (e.evaluated)
      for (const auto& [eps, len] : e.report.fit_lengths) std::printf("  fit(%g)=%d", eps, len);
    std::printf("\n");
    std::fflush(stdout);
  });
  io::save_doc(dir + "/checkpoint.txt", io::checkpoint_doc(res.net));
  io::write_file(dir + "/metrics.csv", train::metrics_csv(res.history, cfg.probe_steps, cfg.eps_list));
  for (auto it = res.history.rbegin(); it != res.history.rend(); ++it)
    if (it->evaluated) {
      save_eval(dir, it->report, {{"command", "train"}, {"epoch", it->epoch}});
      break;
    }
  if (!res.history.empty()) {
    for (double e : cfg.eps_list)
      std::printf("best fit length over epochs (eps=%g): %d\n", e, res.best_fit(e));
  }
  std::printf("wrote %s/checkpoint.txt and metrics.csv\n", dir.c_str());
  if (res.diverged) {
    std::fprintf(stderr, "hmmlab train: %s; kept the last good checkpoint\n", res.message.c_str());
    return 1;
  }
  return 0;
}

// ---- eval / fitlen / bcot ---------------------------------------------------------

struct EvalArgs {
  ModelArgs model;
  std::string data;
  std::string checkpoint;
  std::string construction;
  bool oracle = false;
  int T = 0;
  int E = 256;
  std::uint64_t eval_seed = 0x6576616cULL;
  std::string mask;
  std::string eps = "0.05,0.1";
  int block = 0;
  std::string feedback = "predicted";
  bool snap = false;
  std::string out;
};

ModelInstance eval_model(const EvalArgs& a, int T) {
  if (!a.data.empty()) return io::model_from_doc(io::load_doc(a.data + "/model.txt"));
  if (!a.model.given() && !a.construction.empty()) {
    const io::TextDoc doc = io::load_doc(a.construction);
    if (doc.has("model")) return ModelArgs::from_echo(json::parse(doc.get("model")));
  }
  return a.model.load(T);
}

int horizon_of(const EvalArgs& a) {
  if (a.T > 0) return a.T;
  if (!a.data.empty()) {
    const auto trs = io::parse_jsonl(io::read_file(a.data + "/trajectories.jsonl"));
    if (!trs.empty()) return static_cast<int>(trs.front().length());
  }
  return 120;
}

eval::EvalReport finish(eval::EvalReport r, const EvalArgs& a) {
  r.eps_list = parse_doubles(a.eps);
  r.finalize();
  return r;
}

int cmd_eval(const EvalArgs& a) {
  const int T = horizon_of(a);
  const ModelInstance mi = eval_model(a, T);
  const eval::MaskKind mask = a.mask.empty() ? eval::default_mask(mi.kind) : eval::mask_kind_from_string(a.mask);
  eval::Predictor pred;
  train::Network net;
  if (a.oracle) {
    pred = eval::oracle_predictor();
  } else {
    if (a.checkpoint.empty()) throw ParameterError("eval needs --checkpoint or --oracle");
    net = io::network_from_doc(io::load_doc(a.checkpoint));
    if (net.enc.obs_dim != mi.obs_count()) throw ValidationError("checkpoint input width does not match the model");
    pred = train::network_predictor(net, mi, a.block);
  }
  const auto r = finish(eval::eval_rollouts(pred, mi, a.E, T, a.eval_seed, mask), a);
  const std::string dir = out_dir(a.out, "eval");
  const json echo = {{"command", "eval"},       {"model", a.data.empty() ? a.model.echo(T) : json{{"data", a.data}}},
                     {"checkpoint", a.checkpoint}, {"oracle", a.oracle}, {"T", T}, {"E", a.E}, {"eval_seed", a.eval_seed},
                     {"mask", eval::to_string(mask)}, {"block", a.block}};
  save_eval(dir, r, echo);
  write_config(dir, echo);
  print_report(r);
  return 0;
}

struct FitArgs {
  std::string csv;
  std::string eps = "0.05,0.1";
};

int cmd_fitlen(const FitArgs& a) {
  const std::string text = io::read_file(a.csv);
  std::stringstream ss(text);
  std::string line;
  std::vector<double> losses;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::stringstream ls(line);
    std::string step, loss;
    if (!std::getline(ls, step, ',') || !std::getline(ls, loss, ','))
      throw FormatError(a.csv + ": line " + std::to_string(lineno) + " is not 'step,mean_loss,...'");
    losses.push_back(loss.empty() ? std::numeric_limits<double>::quiet_NaN()
                                  : io::detail::parse_double(loss, a.csv + " line " + std::to_string(lineno)));
  }
  for (double e : parse_doubles(a.eps))
    std::printf("fit_length eps=%g: %d / %zu\n", e, eval::fit_length(losses, e), losses.size());
  return 0;
}

int cmd_bcot(const EvalArgs& a) {
  const int T = horizon_of(a);
  const ModelInstance mi = eval_model(a, T);
  if (mi.kind == ModelKind::lds) throw TaskError("block CoT needs discrete observations");
  const eval::MaskKind mask = a.mask.empty() ? eval::default_mask(mi.kind) : eval::mask_kind_from_string(a.mask);
  train::BlockCotConfig bc;
  bc.b = a.block > 0 ? a.block : T;
  bc.feedback = train::feedback_from_string(a.feedback);
  bc.snap_onehot = a.snap;
  bc.validate(T);
  train::Network net;
  construct::Tf2Construction con;
  train::BlockFn fn;
  if (!a.checkpoint.empty()) {
    net = io::network_from_doc(io::load_doc(a.checkpoint));
    fn = train::network_block_fn(net);
  } else if (!a.construction.empty()) {
    const io::TextDoc doc = io::load_doc(a.construction);
    if (io::construction_theorem(doc) != io::Theorem::tf) throw ParameterError("block CoT runs the log-depth construction only");
    con = io::get_tf_construction(doc);
    if (bc.b > con.params.T) throw ParameterError("block length exceeds the construction horizon");
    fn = train::construction_block_fn(con);
  } else {
    throw ParameterError("bcot needs --checkpoint or --construction");
  }
  const Vector init = train::initial_belief(mi);
  int passes = 0;
  const eval::Predictor pred = [&](const Trajectory& tr) {
    const auto r = train::block_cot_forward(fn, tr.obs, bc, init, &tr.targets);
    passes = r.forward_passes;
    return r.predictions;
  };
  const auto r = finish(eval::eval_rollouts(pred, mi, a.E, T, a.eval_seed, mask), a);
  const std::string dir = out_dir(a.out, "bcot");
  const json echo = {{"command", "bcot"},
                     {"model", a.data.empty() ? a.model.echo(T) : json{{"data", a.data}}},
                     {"checkpoint", a.checkpoint},
                     {"construction", a.construction},
                     {"T", T},
                     {"E", a.E},
                     {"eval_seed", a.eval_seed},
                     {"mask", eval::to_string(mask)},
                     {"block", bc.b},
                     {"feedback", train::to_string(bc.feedback)},
                     {"snap_onehot", bc.snap_onehot},
                     {"forward_passes", passes}};
  save_eval(dir, r, echo);
  write_config(dir, echo);
  std::printf("block %d, feedback %s, snap_onehot %s: %d forward passes per sequence\n", bc.b, train::to_string(bc.feedback),
              bc.snap_onehot ? "on" : "off", passes);
  print_report(r);
  return 0;
}

// ---- cost -----------------------------------------------------------------------

int cmd_cost(int T, int block) {
  if (block > 0) {
    std::printf("cost(T=%d, b=%d) = %s\n", T, block, io::fmt17(train::block_cot_cost(T, block)).c_str());
    return 0;
  }
  const double base = train::block_cot_cost(T, 1);
  std::printf("b,cost,ratio_to_b1\n");
  for (int b = 1; b <= T; ++b) {
    const double c = train::block_cot_cost(T, b);
    std::printf("%d,%s,%s\n", b, io::fmt17(c).c_str(), io::fmt17(base / c).c_str());
  }
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const VerificationFailed*>(&e)) return 1;
  if (dynamic_cast<const DivergenceError*>(&e) || dynamic_cast<const NumericError*>(&e)) return 1;
  if (dynamic_cast<const Error*>(&e) || dynamic_cast<const json::exception*>(&e)) return 2;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hmmlab: belief-state filtering, constructions, and training experiments"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a model manifest and trajectory dataset");
  gen.model.add(g);
  g->add_option("--T", gen.T, "Sequence length");
  g->add_option("--count", gen.count, "Number of trajectories");
  g->add_option("--data-seed", gen.data_seed, "Trajectory seed (defaults to one derived from --seed)")
      ->each([&gen](const std::string&) { gen.data_seed_set = true; });
  g->add_option("--out", gen.out, "Output directory");

  RolloutArgs ro;
  auto* r = app.add_subcommand("rollout", "Print trajectories as JSON lines");
  ro.model.add(r);
  r->add_option("--T", ro.T, "Sequence length");
  r->add_option("--data-seed", ro.data_seed, "Trajectory seed");
  r->add_option("--index", ro.index, "First trajectory index");
  r->add_option("--count", ro.count, "Number of trajectories");

  FilterArgs fi;
  auto* f = app.add_subcommand("filter", "Run the exact filter on an observation sequence");
  fi.model.add(f);
  f->add_option("--obs", fi.obs, "Comma-separated observations")->required();
  f->add_option("--target", fi.target, "belief or nextobs (default: the family's task)");
  f->add_flag("--brute", fi.brute, "Also compare against path enumeration");

  ConstructArgs co;
  auto* c = app.add_subcommand("construct", "Build a hand-constructed network");
  co.model.add(c);
  c->add_option("--theorem", co.theorem, "rnn, tf or norm");
  c->add_option("--T", co.T, "Horizon");
  c->add_flag("--belief-channel", co.belief_channel, "Log-depth construction with a belief input channel");
  c->add_option("--mlp-eps", co.mlp_eps, "Product MLP budget (0 selects the default)");
  c->add_option("--out", co.out, "Output directory");

  VerifyArgs ve;
  auto* v = app.add_subcommand("verify", "Check a construction against the exact recursion");
  ve.model.add(v);
  v->add_option("--construction", ve.construction, "construction.txt")->required();
  v->add_option("--T", ve.T, "Verification length (default: construction horizon)");
  v->add_option("--count", ve.count, "Number of rollouts");
  v->add_option("--data-seed", ve.data_seed, "Rollout seed");
  v->add_option("--tol", ve.tol, "Tolerance for the normalization pipeline");
  v->add_option("--out", ve.out, "Output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train an RNN or Transformer");
  tr.model.add(t);
  t->add_option("--config", tr.config, "Rerun from a run_config.json echo");
  t->add_option("--data", tr.data, "Dataset directory written by gen");
  t->add_option("--T", tr.T, "Sequence length when generating");
  t->add_option("--count", tr.count, "Trajectories when generating");
  t->add_option("--data-seed", tr.data_seed, "Trajectory seed when generating")
      ->each([&tr](const std::string&) { tr.data_seed_set = true; });
  t->add_option("--net", tr.net, "rnn or transformer");
  t->add_option("--dim", tr.dim, "Transformer width");
  t->add_option("--heads", tr.heads, "Attention heads");
  t->add_option("--layers", tr.layers, "Transformer layers");
  t->add_option("--width", tr.width, "MLP width (default 4 * dim)");
  t->add_option("--hidden", tr.hidden, "RNN hidden size");
  t->add_option("--dropout", tr.dropout, "Transformer dropout");
  t->add_option("--epochs", tr.epochs, "Total epochs");
  t->add_option("--batch", tr.batch, "Batch size");
  t->add_option("--train-seed", tr.train_seed, "Initialization, shuffling and dropout seed");
  t->add_option("--curriculum", tr.curriculum, "Doubling curriculum for depth L (0: full length throughout)");
  t->add_option("--block", tr.block, "Teacher-forced block length (adds a belief channel)");
  t->add_option("--eval-E", tr.eval_E, "Rollouts per evaluation");
  t->add_option("--eps", tr.eps, "Fit-length thresholds");
  t->add_option("--stop-eps", tr.stop_eps, "Stop once this fit length reaches T");
  t->add_option("--grad-clip", tr.grad_clip, "Gradient-norm clip (0: off)");
  t->add_option("--warmup", tr.warmup, "Warmup steps");
  t->add_option("--out", tr.out, "Output directory");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint or the oracle on fresh rollouts");
  ev.model.add(e);
  e->add_option("--data", ev.data, "Dataset directory (model and horizon)");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint.txt");
  e->add_flag("--oracle", ev.oracle, "Evaluate the exact filter");
  e->add_option("--T", ev.T, "Horizon");
  e->add_option("--E", ev.E, "Rollouts");
  e->add_option("--eval-seed", ev.eval_seed, "Rollout seed");
  e->add_option("--mask", ev.mask, "all or prediction_stage");
  e->add_option("--eps", ev.eps, "Fit-length thresholds");
  e->add_option("--block", ev.block, "Predicted-feedback block length for belief-channel nets");
  e->add_option("--out", ev.out, "Output directory");

  FitArgs fl;
  auto* fit = app.add_subcommand("fitlen", "Fit lengths from an eval CSV");
  fit->add_option("--csv", fl.csv, "eval.csv")->required();
  fit->add_option("--eps", fl.eps, "Thresholds");

  EvalArgs bc;
  auto* b = app.add_subcommand("bcot", "Block chain-of-thought evaluation");
  bc.model.add(b);
  b->add_option("--data", bc.data, "Dataset directory (model and horizon)");
  b->add_option("--checkpoint", bc.checkpoint, "Trained net with a belief channel");
  b->add_option("--construction", bc.construction, "Log-depth construction with a belief channel");
  b->add_option("--T", bc.T, "Horizon");
  b->add_option("--block", bc.block, "Block length (default T)");
  b->add_option("--feedback", bc.feedback, "predicted or teacher_forced");
  b->add_flag("--snap", bc.snap, "Round fed-back beliefs to one-hot");
  b->add_option("--E", bc.E, "Rollouts");
  b->add_option("--eval-seed", bc.eval_seed, "Rollout seed");
  b->add_option("--mask", bc.mask, "all or prediction_stage");
  b->add_option("--eps", bc.eps, "Fit-length thresholds");
  b->add_option("--out", bc.out, "Output directory");

  int cost_T = 60, cost_b = 0;
  auto* cs = app.add_subcommand("cost", "Block CoT training-cost model");
  cs->add_option("--T", cost_T, "Horizon");
  cs->add_option("--block", cost_b, "Block length (omit for the full table)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "gen") return cmd_gen(gen);
    if (cmd == "rollout") return cmd_rollout(ro);
    if (cmd == "filter") return cmd_filter(fi);
    if (cmd == "construct") return cmd_construct(co);
    if (cmd == "verify") return cmd_verify(ve);
    if (cmd == "train") return cmd_train(tr);
    if (cmd == "eval") return cmd_eval(ev);
    if (cmd == "fitlen") return cmd_fitlen(fl);
    if (cmd == "bcot") return cmd_bcot(bc);
    if (cmd == "cost") return cmd_cost(cost_T, cost_b);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "hmmlab %s: %s\n", cmd.c_str(), ex.what());
    return exit_code_for(ex);
  }
  return 2;
}
