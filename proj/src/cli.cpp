#include "coordflow/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace coordflow {

std::uint64_t stream_seed(std::uint64_t master, SeedStream s) {
  return split_seed(master, static_cast<std::uint64_t>(s));
}

Ablation ablation_from_label(const std::string& label) {
  if (label == "full") return {true, true, true};
  if (label == "none") return {false, false, false};
  Ablation a{false, false, false};
  std::stringstream ss(label);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "compose")
      a.compose = true;
    else if (part == "temporal")
      a.temporal = true;
    else if (part == "spatial")
      a.spatial = true;
    else
      throw std::invalid_argument("unknown ablation component '" + part + "' in '" + label +
                                  "' (expected full, none or compose/temporal/spatial joined by '+')");
  }
  return a;
}

FlowHyper RunConfig::default_policy_hyper() {
  FlowHyper h;
  h.hidden_dims = {64, 64};
  h.lr = 2e-3;
  h.lr_final = 1e-5;
  h.epochs = 800;
  h.batch_size = 32;
  return h;
}

WeightTrainHyper RunConfig::default_weight_hyper() {
  WeightTrainHyper h;
  h.hidden = {32};
  h.lr = 1e-2;
  h.epochs = 5;
  h.batch_size = 32;
  return h;
}

SamplerConfig RunConfig::default_sampler() {
  SamplerConfig s;
  s.coord_step = 3.0;
  return s;
}

void RunConfig::validate() const {
  if (tasks.empty()) throw std::invalid_argument("config: task suite is empty");
  std::set<std::string> ids;
  for (const auto& t : tasks) {
    t.validate();
    if (!ids.insert(t.id).second) throw std::invalid_argument("config: duplicate task id '" + t.id + "'");
  }
  if (unimanual_demos < 1) throw std::invalid_argument("config: demos.unimanual must be >= 1");
  if (!(unimanual_noise >= 0.0)) throw std::invalid_argument("config: demos.unimanual_noise must be >= 0");
  if (bimanual_demos < 0) throw std::invalid_argument("config: demos.bimanual must be >= 0");
  if (policy.epochs < 1 || policy.batch_size < 0 || !(policy.lr > 0.0) || policy.hidden_dims.empty())
    throw std::invalid_argument("config: bad policy hyperparameters");
  if (!(policy.p_uncond >= 0.0 && policy.p_uncond <= 1.0)) throw std::invalid_argument("config: p_uncond outside [0, 1]");
  if (weights.epochs < 0 || weights.batch_size < 1 || !(weights.lr > 0.0) || weights.max_samples < 0)
    throw std::invalid_argument("config: bad weight-net hyperparameters");
  sampler.validate();
  if (!(calib_low >= 0.0 && calib_low < calib_high && calib_high <= 100.0))
    throw std::invalid_argument("config: calibration percentiles must satisfy 0 <= low < high <= 100");
  if (episodes < 1) throw std::invalid_argument("config: eval.episodes must be >= 1");
  if (strategies.empty()) throw std::invalid_argument("config: eval.strategies is empty");
  if (ablations.empty()) throw std::invalid_argument("config: eval.ablations is empty");
  if (threads < 1) throw std::invalid_argument("config: eval.threads must be >= 1");
}

namespace {

// Object reader that rejects keys outside `allowed` and reports the path of
// any malformed member.
class Reader {
 public:
  Reader(const json& j, std::string where, std::initializer_list<const char*> allowed) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw SchemaError(where_ + ": expected an object");
    for (const auto& [k, v] : j.items())
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
        throw SchemaError(where_ + ": unknown key '" + k + "'");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const { return j_.at(key); }
  std::string path(const char* key) const { return where_ + "." + key; }

  template <typename T>
  void opt(const char* key, T& dst) const {
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw SchemaError(path(key) + ": " + e.what());
    }
  }

  // Numbers, or the strings "inf" / "-inf".
  void opt_real(const char* key, double& dst) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (v.is_number()) {
      dst = v.get<double>();
    } else if (v == "inf") {
      dst = std::numeric_limits<double>::infinity();
    } else if (v == "-inf") {
      dst = -std::numeric_limits<double>::infinity();
    } else {
      throw SchemaError(path(key) + ": expected a number, \"inf\" or \"-inf\"");
    }
  }

 private:
  const json& j_;
  std::string where_;
};

json real_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

}  // namespace

json to_json(const RunConfig& c) {
  json tasks = json::array();
  for (const auto& t : c.tasks) tasks.push_back(to_json(t));
  json strategies = json::array();
  for (auto s : c.strategies) strategies.push_back(to_string(s));
  json ablations = json::array();
  for (const auto& a : c.ablations) ablations.push_back(a.label());
  return {
      {"experiment", c.experiment},
      {"seed", c.seed},
      {"out_dir", c.out_dir.string()},
      {"tasks", tasks},
      {"demos", {{"unimanual", c.unimanual_demos}, {"unimanual_noise", c.unimanual_noise}, {"bimanual", c.bimanual_demos}}},
      {"policy",
       {{"hidden_dims", c.policy.hidden_dims},
        {"activation", to_string(c.policy.activation)},
        {"lr", c.policy.lr},
        {"lr_final", c.policy.lr_final},
        {"epochs", c.policy.epochs},
        {"batch_size", c.policy.batch_size},
        {"p_uncond", c.policy.p_uncond},
        {"normalize_actions", c.policy.normalize_actions},
        {"normalize_conditioning", c.policy.normalize_conditioning}}},
      {"weights",
       {{"hidden_dims", c.weights.hidden},
        {"lr", c.weights.lr},
        {"epochs", c.weights.epochs},
        {"batch_size", c.weights.batch_size},
        {"max_samples", c.weights.max_samples}}},
      {"sampler",
       {{"n_max", c.sampler.n_max},
        {"tau_low", real_json(c.sampler.tau_low)},
        {"tau_high", real_json(c.sampler.tau_high)},
        {"guidance", {c.sampler.guidance.left, c.sampler.guidance.right}},
        {"coord_mode", to_string(c.sampler.coord_mode)},
        {"coord_step", c.sampler.coord_step}}},
      {"calibrate", {{"p_low", c.calib_low}, {"p_high", c.calib_high}}},
      {"eval",
       {{"episodes", c.episodes},
        {"strategies", strategies},
        {"ablations", ablations},
        {"thresholds", c.thresholds == ThresholdSource::config ? "config" : "calibrated"},
        {"threads", c.threads}}},
  };
}

RunConfig run_config_from(const json& j) {
  RunConfig c;
  const Reader top(j, "config",
                   {"experiment", "seed", "out_dir", "tasks", "demos", "policy", "weights", "sampler", "calibrate", "eval"});
  top.opt("experiment", c.experiment);
  top.opt("seed", c.seed);
  if (top.has("out_dir")) {
    std::string dir;
    top.opt("out_dir", dir);
    c.out_dir = dir;
  }
  if (top.has("tasks")) {
    const json& arr = top.at("tasks");
    if (!arr.is_array()) throw SchemaError("config.tasks: expected an array");
    c.tasks.clear();
    for (const auto& t : arr) c.tasks.push_back(task_spec_from(t));
  }
  if (top.has("demos")) {
    const Reader r(top.at("demos"), "config.demos", {"unimanual", "unimanual_noise", "bimanual"});
    r.opt("unimanual", c.unimanual_demos);
    r.opt("unimanual_noise", c.unimanual_noise);
    r.opt("bimanual", c.bimanual_demos);
  }
  if (top.has("policy")) {
    const Reader r(top.at("policy"), "config.policy",
                   {"hidden_dims", "activation", "lr", "lr_final", "epochs", "batch_size", "p_uncond",
                    "normalize_actions", "normalize_conditioning"});
    r.opt("hidden_dims", c.policy.hidden_dims);
    if (r.has("activation")) c.policy.activation = activation_from_string(r.at("activation").get<std::string>());
    r.opt("lr", c.policy.lr);
    r.opt("lr_final", c.policy.lr_final);
    r.opt("epochs", c.policy.epochs);
    r.opt("batch_size", c.policy.batch_size);
    r.opt("p_uncond", c.policy.p_uncond);
    r.opt("normalize_actions", c.policy.normalize_actions);
    r.opt("normalize_conditioning", c.policy.normalize_conditioning);
  }
  if (top.has("weights")) {
    const Reader r(top.at("weights"), "config.weights", {"hidden_dims", "lr", "epochs", "batch_size", "max_samples"});
    r.opt("hidden_dims", c.weights.hidden);
    r.opt("lr", c.weights.lr);
    r.opt("epochs", c.weights.epochs);
    r.opt("batch_size", c.weights.batch_size);
    r.opt("max_samples", c.weights.max_samples);
  }
  if (top.has("sampler")) {
    const Reader r(top.at("sampler"), "config.sampler",
                   {"n_max", "tau_low", "tau_high", "guidance", "coord_mode", "coord_step"});
    r.opt("n_max", c.sampler.n_max);
    r.opt_real("tau_low", c.sampler.tau_low);
    r.opt_real("tau_high", c.sampler.tau_high);
    if (r.has("guidance")) {
      std::array<double, 2> g{};
      r.opt("guidance", g);
      c.sampler.guidance = {g[0], g[1]};
    }
    if (r.has("coord_mode")) c.sampler.coord_mode = coord_mode_from_string(r.at("coord_mode").get<std::string>());
    r.opt("coord_step", c.sampler.coord_step);
  }
  if (top.has("calibrate")) {
    const Reader r(top.at("calibrate"), "config.calibrate", {"p_low", "p_high"});
    r.opt("p_low", c.calib_low);
    r.opt("p_high", c.calib_high);
  }
  if (top.has("eval")) {
    const Reader r(top.at("eval"), "config.eval", {"episodes", "strategies", "ablations", "thresholds", "threads"});
    r.opt("episodes", c.episodes);
    if (r.has("strategies")) {
      std::vector<std::string> names;
      r.opt("strategies", names);
      c.strategies.clear();
      for (const auto& n : names) c.strategies.push_back(strategy_from_string(n));
    }
    if (r.has("ablations")) {
      std::vector<std::string> labels;
      r.opt("ablations", labels);
      c.ablations.clear();
      for (const auto& l : labels) c.ablations.push_back(ablation_from_label(l));
    }
    if (r.has("thresholds")) {
      std::string src;
      r.opt("thresholds", src);
      if (src == "config")
        c.thresholds = ThresholdSource::config;
      else if (src == "calibrated")
        c.thresholds = ThresholdSource::calibrated;
      else
        throw SchemaError("config.eval.thresholds: expected \"config\" or \"calibrated\"");
    }
    r.opt("threads", c.threads);
  }
  c.validate();
  return c;
}

std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("out_dir");
  j["eval"].erase("threads");
  return fnv1a_hex(j.dump());
}

std::string EvalRow::label() const { return to_string(strategy) + "/" + ablation.label(); }

std::vector<EvalRow> eval_rows(const RunConfig& c) {
  std::vector<EvalRow> rows;
  for (std::size_t s = 0; s < c.strategies.size(); ++s) {
    if (s == 0)
      for (const auto& a : c.ablations) rows.push_back({c.strategies[s], a});
    else
      rows.push_back({c.strategies[s], c.ablations.front()});
  }
  return rows;
}

namespace {

json manifest_base(const RunConfig& c, const std::string& command) {
  return {{"command", command}, {"experiment", c.experiment}, {"seed", c.seed}, {"config", to_json(c)}};
}

json read_artifact(const std::filesystem::path& path, const std::string& kind, const std::string& hint) {
  if (!std::filesystem::exists(path)) throw MissingArtifact("missing " + kind + " (" + hint + ")", path);
  return open_envelope(read_json(path), kind);
}

std::string num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

void write_loss_csv(const std::filesystem::path& path, const std::string& hash, const std::vector<double>& curve,
                    int first_epoch) {
  std::vector<std::vector<std::string>> rows{{"schema_version", "config_hash", "epoch", "loss"}};
  for (std::size_t i = 0; i < curve.size(); ++i)
    rows.push_back({std::to_string(kSchemaVersion), hash, std::to_string(first_epoch + static_cast<int>(i)), num(curve[i])});
  write_text(path, csv_join(rows));
}

std::vector<ArmDemonstration> load_arm_demos(const RunPaths& p, const std::string& arm) {
  std::vector<ArmDemonstration> out;
  for (const auto& d : read_artifact(p.arm_demos(arm), "arm_demos", "run gen-data first")) out.push_back(arm_demo_from(d));
  return out;
}

std::vector<Demonstration> load_bimanual_demos(const RunConfig& c, const RunPaths& p) {
  std::vector<Demonstration> out;
  for (const auto& t : c.tasks)
    for (const auto& d : read_artifact(p.task_demos(t.id), "bimanual_demos", "run gen-data first"))
      out.push_back(demo_from(d));
  return out;
}

PolicyCheckpoint load_checkpoint(const RunPaths& p, const std::string& name) {
  return checkpoint_from(read_artifact(p.checkpoint(name), "policy_checkpoint", "run train first"));
}

// nullopt when training fell back to uniform weights.
std::optional<WeightNet> load_weights(const RunPaths& p) {
  const json& d = read_artifact(p.checkpoint("weights"), "weight_net", "run train first");
  if (d.at("fallback_uniform").get<bool>()) return std::nullopt;
  return weight_net_from(d.at("net"));
}

std::vector<TrainingSample> arm_samples(const std::vector<ArmDemonstration>& demos) {
  std::vector<TrainingSample> out;
  for (const auto& d : demos)
    for (const auto& s : d.steps) out.push_back({s.cond, s.action.v});
  return out;
}

std::vector<TrainingSample> joint_samples(const std::vector<Demonstration>& demos, const std::vector<TaskSpec>& tasks) {
  std::vector<TrainingSample> out;
  for (const auto& d : demos) {
    const auto task = std::find_if(tasks.begin(), tasks.end(), [&](const TaskSpec& t) { return t.id == d.task; });
    if (task == tasks.end()) throw SchemaError("demonstration of unknown task '" + d.task + "'");
    const TaskKind kind = task->kind;
    for (const auto& s : d.steps) {
      Vec a(s.action.left.v.size() + s.action.right.v.size());
      a << s.action.left.v, s.action.right.v;
      out.push_back({joint_conditioning(s.left, s.right, kind), a});
    }
  }
  return out;
}

}  // namespace

GenDataOutput cmd_gen_data(const RunConfig& c) {
  c.validate();
  const RunPaths p{c.out_dir};
  const std::string hash = config_hash(c);
  GenDataOutput out;
  out.left = gen_unimanual_demos(c.tasks.front().left_geom, "left", c.unimanual_demos,
                                 stream_seed(c.seed, SeedStream::left_demos), c.unimanual_noise);
  out.right = gen_unimanual_demos(c.tasks.front().right_geom, "right", c.unimanual_demos,
                                  stream_seed(c.seed, SeedStream::right_demos), c.unimanual_noise);
  json files = json::array();
  for (const auto& [arm, demos] : {std::pair{"left", &out.left}, std::pair{"right", &out.right}}) {
    json arr = json::array();
    for (const auto& d : *demos) arr.push_back(to_json(d));
    write_json(p.arm_demos(arm), envelope("arm_demos", hash, arr));
    files.push_back(p.arm_demos(arm).filename().string());
  }
  const std::uint64_t bi_seed = stream_seed(c.seed, SeedStream::bimanual_demos);
  json counts = {{"unimanual_per_arm", c.unimanual_demos}};
  for (std::size_t k = 0; k < c.tasks.size(); ++k) {
    const TaskSpec& t = c.tasks[k];
    std::vector<Demonstration> demos;
    if (c.bimanual_demos > 0) demos = gen_bimanual_demos(t, c.bimanual_demos, split_seed(bi_seed, k));
    json arr = json::array();
    for (const auto& d : demos) arr.push_back(to_json(d));
    write_json(p.task_demos(t.id), envelope("bimanual_demos", hash, arr));
    files.push_back(p.task_demos(t.id).filename().string());
    counts["bimanual_" + t.id] = static_cast<int>(demos.size());
    out.bimanual.insert(out.bimanual.end(), demos.begin(), demos.end());
  }
  json m = manifest_base(c, "gen-data");
  m["files"] = files;
  m["counts"] = counts;
  m["notes"] = json::array();
  if (c.bimanual_demos == 0)
    m["notes"].push_back(
        "no bimanual demonstrations: the weight net falls back to uniform weights and the joint policy is not trained");
  write_json(p.manifest("gen-data"), envelope("manifest", hash, m));
  return out;
}

TrainOutput cmd_train(const RunConfig& c) {
  c.validate();
  const RunPaths p{c.out_dir};
  const std::string hash = config_hash(c);
  const auto left_demos = load_arm_demos(p, "left");
  const auto right_demos = load_arm_demos(p, "right");
  const auto bimanual = load_bimanual_demos(c, p);

  TrainOutput out;
  json m = manifest_base(c, "train");
  json seeds;
  json losses;
  auto train = [&](const std::string& name, const std::vector<TrainingSample>& samples, SeedStream stream) {
    FlowHyper h = c.policy;
    h.seed = stream_seed(c.seed, stream);
    TrainReport rep = train_flow_policy(samples, h);
    write_json(p.checkpoint(name), envelope("policy_checkpoint", hash, to_json(rep.checkpoint)));
    write_loss_csv(p.loss_csv(name), hash, rep.loss_curve, 1);
    seeds[name] = h.seed;
    losses[name] = rep.checkpoint.final_loss;
    return rep.checkpoint;
  };
  out.left = train("left", arm_samples(left_demos), SeedStream::left_policy);
  out.right = train("right", arm_samples(right_demos), SeedStream::right_policy);
  if (!bimanual.empty()) out.joint = train("joint", joint_samples(bimanual, c.tasks), SeedStream::joint_policy);

  m["notes"] = json::array();
  WeightTrainHyper wh = c.weights;
  wh.seed = stream_seed(c.seed, SeedStream::weight_net);
  wh.sampler = c.sampler;
  // Geometry and clearance are shared by the suite's tasks.
  wh.coord = task_coord_config(c.tasks.front(), Ablation{});
  out.weights = train_weight_net(bimanual, out.left, out.right, wh);
  seeds["weights"] = wh.seed;
  json wn = {{"fallback_uniform", out.weights.fallback_uniform}, {"net", to_json(out.weights.net)}};
  write_json(p.checkpoint("weights"), envelope("weight_net", hash, wn));
  std::vector<double> curve{out.weights.initial_loss};
  curve.insert(curve.end(), out.weights.loss_curve.begin(), out.weights.loss_curve.end());
  if (!out.weights.fallback_uniform) write_loss_csv(p.loss_csv("weights"), hash, curve, 0);
  losses["weights"] = out.weights.final_loss;
  if (out.weights.fallback_uniform)
    m["notes"].push_back("no bimanual demonstrations: weight net falls back to uniform weights");
  if (bimanual.empty()) m["notes"].push_back("no bimanual demonstrations: joint policy not trained");

  m["seeds"] = seeds;
  m["final_loss"] = losses;
  m["weight_net_samples"] = out.weights.samples;
  m["fallback_uniform"] = out.weights.fallback_uniform;
  write_json(p.manifest("train"), envelope("manifest", hash, m));
  return out;
}

Thresholds cmd_calibrate(const RunConfig& c) {
  c.validate();
  const RunPaths p{c.out_dir};
  const std::string hash = config_hash(c);
  const auto demos = load_bimanual_demos(c, p);
  const PolicyCheckpoint left = load_checkpoint(p, "left");
  const PolicyCheckpoint right = load_checkpoint(p, "right");
  const auto weights = load_weights(p);
  if (demos.empty()) throw DegenerateDistribution("calibrate: empty energy distribution (no bimanual demonstrations)");
  const std::vector<double> energies = initial_energies(demos, c.tasks, left, right, weights ? &*weights : nullptr,
                                                        c.sampler, stream_seed(c.seed, SeedStream::calibration));
  const Thresholds th = calibrate_thresholds(energies, c.calib_low, c.calib_high);
  json d = {{"tau_low", th.tau_low},
            {"tau_high", th.tau_high},
            {"p_low", c.calib_low},
            {"p_high", c.calib_high},
            {"samples", energies.size()},
            {"energy_min", *std::min_element(energies.begin(), energies.end())},
            {"energy_max", *std::max_element(energies.begin(), energies.end())}};
  write_json(p.thresholds(), envelope("thresholds", hash, d));
  return th;
}

namespace {

std::string histogram_csv(const json& report, const std::string& hash) {
  std::vector<std::vector<std::string>> rows{
      {"schema_version", "config_hash", "row", "strategy", "ablation", "steps", "count"}};
  for (const auto& row : report.at("rows")) {
    const SuiteReport suite = suite_report_from(row.at("suite"));
    std::map<int, long> counts;
    for (const auto& t : suite.tasks)
      for (const auto& e : t.results)
        for (const auto& s : e.steps) ++counts[s.steps_used];
    for (const auto& [steps, n] : counts)
      rows.push_back({std::to_string(kSchemaVersion), hash, row.at("label").get<std::string>(),
                      row.at("strategy").get<std::string>(), row.at("ablation").get<std::string>(),
                      std::to_string(steps), std::to_string(n)});
  }
  return csv_join(rows);
}

std::string ablation_csv(const json& report, const std::string& hash) {
  std::vector<std::vector<std::string>> rows{{"schema_version", "config_hash", "row", "strategy", "ablation", "task",
                                              "success_rate", "collision_rate", "mean_steps"}};
  for (const auto& row : report.at("rows")) {
    const SuiteReport suite = suite_report_from(row.at("suite"));
    auto add = [&](const std::string& task, double s, double c, double m) {
      rows.push_back({std::to_string(kSchemaVersion), hash, row.at("label").get<std::string>(),
                      row.at("strategy").get<std::string>(), row.at("ablation").get<std::string>(), task, num(s),
                      num(c), num(m)});
    };
    for (const auto& t : suite.tasks) add(t.task, t.success_rate, t.collision_rate, t.mean_steps);
    add("mean", suite.mean_success, suite.mean_collision, suite.mean_steps);
  }
  return csv_join(rows);
}

std::string summary_table(const json& report) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(3);
  ss << std::left << std::setw(28) << "row" << std::setw(10) << "success" << std::setw(11) << "collision"
     << std::setw(12) << "mean_steps";
  const json& rows = report.at("rows");
  if (!rows.empty())
    for (const auto& t : rows.front().at("suite").at("tasks")) ss << std::setw(16) << t.at("task").get<std::string>();
  ss << "\n";
  for (const auto& row : rows) {
    const json& s = row.at("suite");
    ss << std::setw(28) << row.at("label").get<std::string>() << std::setw(10) << s.at("mean_success").get<double>()
       << std::setw(11) << s.at("mean_collision").get<double>() << std::setw(12) << s.at("mean_steps").get<double>();
    for (const auto& t : s.at("tasks")) ss << std::setw(16) << t.at("success_rate").get<double>();
    ss << "\n";
  }
  return ss.str();
}

}  // namespace

json cmd_eval(const RunConfig& c) {
  c.validate();
  const RunPaths p{c.out_dir};
  const std::string hash = config_hash(c);
  const PolicyCheckpoint left = load_checkpoint(p, "left");
  const PolicyCheckpoint right = load_checkpoint(p, "right");
  const auto weights = load_weights(p);
  const std::vector<EvalRow> rows = eval_rows(c);
  std::optional<PolicyCheckpoint> joint;
  if (std::any_of(rows.begin(), rows.end(), [](const EvalRow& r) { return !r.ablation.compose; }))
    joint = checkpoint_from(
        read_artifact(p.checkpoint("joint"), "policy_checkpoint", "the no-composition rows need bimanual demonstrations"));

  SamplerConfig sampler = c.sampler;
  std::string source = "config";
  if (c.thresholds == ThresholdSource::calibrated) {
    const json& th = read_artifact(p.thresholds(), "thresholds", "run calibrate first");
    sampler.tau_low = th.at("tau_low").get<double>();
    sampler.tau_high = th.at("tau_high").get<double>();
    source = "calibrated";
  }

  json out_rows = json::array();
  std::ostringstream log;
  log << json{{"record", "header"},
              {"schema_version", kSchemaVersion},
              {"kind", "trajectory_log"},
              {"config_hash", hash}}
             .dump()
      << "\n";
  for (const auto& row : rows) {
    SamplerConfig s = sampler;
    s.strategy = row.strategy;
    const SampledPolicy policy(&left, &right, joint ? &*joint : nullptr, weights ? &*weights : nullptr, s,
                               row.ablation);
    const SuiteReport rep = evaluate_suite(c.tasks, policy, c.episodes, stream_seed(c.seed, SeedStream::evaluation),
                                           c.threads);
    const std::string label = row.label();
    out_rows.push_back({{"label", label},
                        {"strategy", to_string(row.strategy)},
                        {"ablation", row.ablation.label()},
                        {"suite", to_json(rep, false)}});
    for (const auto& t : rep.tasks)
      for (const auto& e : t.results) {
        for (std::size_t k = 0; k < e.steps.size(); ++k) {
          const StepRecord& st = e.steps[k];
          log << json{{"record", "step"},
                      {"row", label},
                      {"task", t.task},
                      {"episode", e.episode},
                      {"step", k},
                      {"left", to_json(st.executed.left)},
                      {"right", to_json(st.executed.right)},
                      {"energy", to_json(st.energy)},
                      {"trace",
                       {{"initial_energy", st.initial_energy},
                        {"steps_used", st.steps_used},
                        {"termination", to_string(st.reason)},
                        {"ik_flagged", st.ik_flagged}}},
                      {"ee_distance", st.ee_distance}}
                     .dump()
              << "\n";
        }
        log << json{{"record", "episode"},
                    {"row", label},
                    {"task", t.task},
                    {"episode", e.episode},
                    {"seed", e.seed},
                    {"success", e.success},
                    {"failure", e.failure ? json(to_string(*e.failure)) : json(nullptr)},
                    {"min_ee_distance", e.min_ee_distance}}
                   .dump()
            << "\n";
      }
  }
  json data = {{"experiment", c.experiment},
               {"seed", c.seed},
               {"episodes_per_task", c.episodes},
               {"thresholds", {{"source", source}, {"tau_low", real_json(sampler.tau_low)}, {"tau_high", real_json(sampler.tau_high)}}},
               {"rows", out_rows}};
  write_json(p.report(), envelope("eval_report", hash, data));
  write_text(p.summary(), summary_table(data));
  write_text(p.trajectory_log(), log.str());
  write_text(p.step_histogram(), histogram_csv(data, hash));
  return data;
}

void cmd_export_plots(const std::filesystem::path& report, const std::filesystem::path& out_dir) {
  if (!std::filesystem::exists(report)) throw MissingArtifact("missing evaluation report (run eval first)", report);
  const json j = read_json(report);
  const json& data = open_envelope(j, "eval_report");
  const std::string hash = j.at("config_hash").get<std::string>();
  std::string hist, bars;
  try {
    hist = histogram_csv(data, hash);
    bars = ablation_csv(data, hash);
  } catch (const json::exception& e) {
    throw SchemaError("malformed evaluation report " + report.string() + ": " + e.what());
  }
  write_text(out_dir / "step_histogram.csv", hist);
  write_text(out_dir / "ablation.csv", bars);
}

std::string csv_join(const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i].find_first_of(",\"\n") != std::string::npos)
        throw std::invalid_argument("csv: field needs quoting: '" + r[i] + "'");
      if (i) out += ',';
      out += r[i];
    }
    out += '\n';
  }
  return out;
}

std::vector<std::vector<std::string>> csv_parse_strict(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  if (text.empty()) throw SchemaError("csv: empty document");
  if (text.back() != '\n') throw SchemaError("csv: missing final newline");
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) throw SchemaError("csv: blank line at row " + std::to_string(rows.size() + 1));
    if (line.find_first_of("\"\r") != std::string::npos) throw SchemaError("csv: quoting is not used");
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (line.back() == ',') fields.emplace_back();
    if (!rows.empty() && fields.size() != rows.front().size())
      throw SchemaError("csv: row " + std::to_string(rows.size() + 1) + " has " + std::to_string(fields.size()) +
                        " fields, header has " + std::to_string(rows.front().size()));
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::map<std::pair<std::string, std::string>, double> success_from_log(const std::filesystem::path& log) {
  std::stringstream ss(read_text(log));
  std::string line;
  std::map<std::pair<std::string, std::string>, std::pair<int, int>> tally;
  bool header = false;
  while (std::getline(ss, line)) {
    const json r = json::parse(line);
    const std::string kind = r.at("record").get<std::string>();
    if (kind == "header") {
      if (r.at("schema_version") != kSchemaVersion) throw SchemaError("trajectory log: unsupported schema version");
      header = true;
    } else if (kind == "episode") {
      auto& [ok, n] = tally[{r.at("row").get<std::string>(), r.at("task").get<std::string>()}];
      ok += r.at("success").get<bool>() ? 1 : 0;
      ++n;
    }
  }
  if (!header) throw SchemaError("trajectory log: missing header record");
  std::map<std::pair<std::string, std::string>, double> out;
  for (const auto& [key, v] : tally) out[key] = static_cast<double>(v.first) / v.second;
  return out;
}

ExitCode report_current_exception(std::ostream& err) {
  json rec;
  ExitCode code = ExitCode::failure;
  try {
    throw;
  } catch (const MissingArtifact& e) {
    rec = {{"type", "missing_artifact"}, {"message", e.what()}, {"path", e.path().string()}};
    code = ExitCode::io_failure;
  } catch (const IoError& e) {
    rec = {{"type", "io_error"}, {"message", e.what()}, {"path", e.path().string()}};
    code = ExitCode::io_failure;
  } catch (const SchemaError& e) {
    rec = {{"type", "schema_error"}, {"message", e.what()}};
    code = ExitCode::bad_config;
  } catch (const json::exception& e) {
    rec = {{"type", "schema_error"}, {"message", e.what()}};
    code = ExitCode::bad_config;
  } catch (const DegenerateDistribution& e) {
    rec = {{"type", "degenerate_distribution"}, {"message", e.what()}};
    code = ExitCode::degenerate;
  } catch (const NumericError& e) {
    rec = {{"type", "numeric_error"}, {"message", e.what()}};
    code = ExitCode::numeric;
  } catch (const std::invalid_argument& e) {
    rec = {{"type", "invalid_argument"}, {"message", e.what()}};
    code = ExitCode::bad_config;
  } catch (const std::exception& e) {
    rec = {{"type", "error"}, {"message", e.what()}};
  } catch (...) {
    rec = {{"type", "error"}, {"message", "unknown exception"}};
  }
  rec["exit_code"] = static_cast<int>(code);
  err << json{{"error", rec}}.dump() << "\n";
  return code;
}

}  // namespace coordflow
