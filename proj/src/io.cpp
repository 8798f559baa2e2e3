#include "coordflow/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace coordflow {

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from(const json& j) {
  if (!j.is_array()) throw SchemaError("expected a number array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

namespace {

json mat_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec_json(m.row(r).transpose()));
  return rows;
}

Mat mat_from(const json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw SchemaError("matrix row count mismatch");
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vec row = vec_from(j[r]);
    if (row.size() != cols) throw SchemaError("matrix column count mismatch");
    m.row(r) = row.transpose();
  }
  return m;
}

template <typename F>
auto field(const json& j, const char* key, F&& conv) {
  if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
  try {
    return conv(j.at(key));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad field '") + key + "': " + e.what());
  }
}

template <typename T>
T get(const json& j, const char* key) {
  return field(j, key, [](const json& v) { return v.get<T>(); });
}

}  // namespace

json to_json(const MlpSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_dims", s.hidden_dims},
          {"output_dim", s.output_dim},
          {"activation", to_string(s.activation)}};
}

MlpSpec mlp_spec_from(const json& j) {
  MlpSpec s{get<int>(j, "input_dim"), get<std::vector<int>>(j, "hidden_dims"), get<int>(j, "output_dim"),
            activation_from_string(get<std::string>(j, "activation"))};
  s.validate();
  return s;
}

json to_json(const Mlp& p) {
  json layers = json::array();
  for (std::size_t l = 0; l < p.weights.size(); ++l)
    layers.push_back({{"weights", mat_json(p.weights[l])}, {"biases", vec_json(p.biases[l])}});
  return {{"spec", to_json(p.spec)}, {"layers", layers}};
}

Mlp mlp_from(const json& j) {
  Mlp p = Mlp::zeros(field(j, "spec", mlp_spec_from));
  const json& layers = j.at("layers");
  if (static_cast<int>(layers.size()) != p.spec.num_layers()) throw SchemaError("mlp: layer count mismatch");
  for (int l = 0; l < p.spec.num_layers(); ++l) {
    p.weights[l] = mat_from(layers[l].at("weights"), p.spec.layer_out(l), p.spec.layer_in(l));
    p.biases[l] = vec_from(layers[l].at("biases"));
    if (p.biases[l].size() != p.spec.layer_out(l)) throw SchemaError("mlp: bias size mismatch");
  }
  return p;
}

json to_json(const Normalizer& n) { return {{"mean", vec_json(n.mean)}, {"std", vec_json(n.std)}}; }

Normalizer normalizer_from(const json& j) {
  Normalizer n{field(j, "mean", vec_from), field(j, "std", vec_from)};
  if (n.mean.size() != n.std.size()) throw SchemaError("normalizer: mean/std size mismatch");
  return n;
}

json to_json(const PolicyCheckpoint& c) {
  return {{"action_dim", c.action_dim},
          {"cond_dim", c.cond_dim},
          {"normalizer", to_json(c.normalizer)},
          {"cond_normalizer", to_json(c.cond_normalizer)},
          {"seed", c.seed},
          {"epochs", c.epochs},
          {"final_loss", c.final_loss},
          {"params", to_json(c.params)}};
}

PolicyCheckpoint checkpoint_from(const json& j) {
  PolicyCheckpoint c;
  c.action_dim = get<int>(j, "action_dim");
  c.cond_dim = get<int>(j, "cond_dim");
  c.normalizer = field(j, "normalizer", normalizer_from);
  c.cond_normalizer = field(j, "cond_normalizer", normalizer_from);
  c.seed = get<std::uint64_t>(j, "seed");
  c.epochs = get<int>(j, "epochs");
  c.final_loss = get<double>(j, "final_loss");
  c.params = field(j, "params", mlp_from);
  c.validate();
  return c;
}

json to_json(const WeightNet& w) { return {{"input_layout", WeightNet::kInputLayout}, {"params", to_json(w.params)}}; }

WeightNet weight_net_from(const json& j) {
  WeightNet w;
  w.params = field(j, "params", mlp_from);
  w.validate();
  return w;
}

json to_json(const Conditioning& c) {
  return {{"observation", vec_json(c.observation)},
          {"proprio", vec_json(c.proprio)},
          {"instruction", vec_json(c.instruction)},
          {"is_null", c.is_null}};
}

Conditioning conditioning_from(const json& j) {
  Conditioning c;
  c.observation = field(j, "observation", vec_from);
  c.proprio = field(j, "proprio", vec_from);
  c.instruction = field(j, "instruction", vec_from);
  c.is_null = get<bool>(j, "is_null");
  return c;
}

json to_json(const ArmAction& a) { return vec_json(a.v); }

ArmAction arm_action_from(const json& j) {
  const Vec v = vec_from(j);
  if (v.size() != kArmDim) throw SchemaError("arm action must have 7 entries");
  return ArmAction(ArmVec(v));
}

json to_json(const BimanualAction& a) { return {{"left", to_json(a.left)}, {"right", to_json(a.right)}}; }

BimanualAction bimanual_from(const json& j) {
  return {field(j, "left", arm_action_from), field(j, "right", arm_action_from)};
}

json to_json(const ArmDemonstration& d) {
  json steps = json::array();
  for (const auto& s : d.steps) steps.push_back({{"cond", to_json(s.cond)}, {"action", to_json(s.action)}});
  return {{"arm", d.arm}, {"seed", d.seed}, {"initial", to_json(d.initial)}, {"steps", steps}};
}

ArmDemonstration arm_demo_from(const json& j) {
  ArmDemonstration d;
  d.arm = get<std::string>(j, "arm");
  d.seed = get<std::uint64_t>(j, "seed");
  d.initial = field(j, "initial", arm_action_from);
  for (const auto& s : j.at("steps"))
    d.steps.push_back({field(s, "cond", conditioning_from), field(s, "action", arm_action_from)});
  return d;
}

json to_json(const Demonstration& d) {
  json steps = json::array();
  for (const auto& s : d.steps)
    steps.push_back({{"left", to_json(s.left)}, {"right", to_json(s.right)}, {"action", to_json(s.action)}});
  return {{"task", d.task}, {"seed", d.seed}, {"initial", to_json(d.initial)}, {"steps", steps}};
}

Demonstration demo_from(const json& j) {
  Demonstration d;
  d.task = get<std::string>(j, "task");
  d.seed = get<std::uint64_t>(j, "seed");
  d.initial = field(j, "initial", bimanual_from);
  for (const auto& s : j.at("steps"))
    d.steps.push_back({field(s, "left", conditioning_from), field(s, "right", conditioning_from),
                       field(s, "action", bimanual_from)});
  return d;
}

json to_json(const EnergyBreakdown& e) {
  return {{"e_vel", e.e_vel},       {"e_accel", e.e_accel},   {"e_jerk", e.e_jerk},
          {"e_sync", e.e_sync},     {"e_ee", e.e_ee},         {"e_joint", e.e_joint},
          {"e_coord", e.e_coord},   {"e_comp", e.e_comp},     {"e_total", e.e_total},
          {"weights", e.weights},   {"ik_flagged", e.ik_flagged}};
}

EnergyBreakdown breakdown_from(const json& j) {
  EnergyBreakdown e;
  e.e_vel = get<double>(j, "e_vel");
  e.e_accel = get<double>(j, "e_accel");
  e.e_jerk = get<double>(j, "e_jerk");
  e.e_sync = get<double>(j, "e_sync");
  e.e_ee = get<double>(j, "e_ee");
  e.e_joint = get<double>(j, "e_joint");
  e.e_coord = get<double>(j, "e_coord");
  e.e_comp = get<double>(j, "e_comp");
  e.e_total = get<double>(j, "e_total");
  e.weights = get<TermArray>(j, "weights");
  e.ik_flagged = get<bool>(j, "ik_flagged");
  return e;
}

json to_json(const EpisodeResult& r, bool with_steps) {
  json steps_used = json::array();
  for (const auto& s : r.steps) steps_used.push_back(s.steps_used);
  json j = {{"task", r.task},
            {"episode", r.episode},
            {"seed", r.seed},
            {"success", r.success},
            {"failure", r.failure ? json(to_string(*r.failure)) : json(nullptr)},
            {"min_ee_distance", r.min_ee_distance},
            {"min_joint_distance", r.min_joint_distance},
            {"mean_steps", r.mean_steps},
            {"max_steps", r.max_steps},
            {"steps_used", steps_used}};
  if (with_steps) {
    json steps = json::array();
    for (const auto& s : r.steps)
      steps.push_back({{"executed", to_json(s.executed)},
                       {"energy", to_json(s.energy)},
                       {"steps_used", s.steps_used},
                       {"termination", to_string(s.reason)},
                       {"initial_energy", s.initial_energy},
                       {"ee_distance", s.ee_distance}});
    j["steps"] = steps;
  }
  return j;
}

namespace {

FailureReason failure_from(const std::string& s) {
  for (auto r : {FailureReason::collision, FailureReason::timeout, FailureReason::goal_miss, FailureReason::divergence})
    if (to_string(r) == s) return r;
  throw SchemaError("unknown failure reason '" + s + "'");
}

EpisodeResult episode_from(const json& j) {
  EpisodeResult r;
  r.task = get<std::string>(j, "task");
  r.episode = get<int>(j, "episode");
  r.seed = get<std::uint64_t>(j, "seed");
  r.success = get<bool>(j, "success");
  if (!j.at("failure").is_null()) r.failure = failure_from(get<std::string>(j, "failure"));
  r.min_ee_distance = get<double>(j, "min_ee_distance");
  r.min_joint_distance = get<double>(j, "min_joint_distance");
  r.mean_steps = get<double>(j, "mean_steps");
  r.max_steps = get<int>(j, "max_steps");
  for (const auto& s : j.at("steps_used")) {
    StepRecord rec;
    rec.steps_used = s.get<int>();
    r.steps.push_back(rec);
  }
  if (r.success == r.failure.has_value()) throw SchemaError("episode: success and failure disagree");
  return r;
}

}  // namespace

json to_json(const SuiteReport& r, bool with_steps) {
  json tasks = json::array();
  for (const auto& t : r.tasks) {
    json eps = json::array();
    for (const auto& e : t.results) eps.push_back(to_json(e, with_steps));
    tasks.push_back({{"task", t.task},
                     {"episodes", t.episodes},
                     {"success_rate", t.success_rate},
                     {"collision_rate", t.collision_rate},
                     {"mean_steps", t.mean_steps},
                     {"results", eps}});
  }
  return {{"mean_success", r.mean_success},
          {"mean_collision", r.mean_collision},
          {"mean_steps", r.mean_steps},
          {"tasks", tasks}};
}

SuiteReport suite_report_from(const json& j) {
  SuiteReport r;
  r.mean_success = get<double>(j, "mean_success");
  r.mean_collision = get<double>(j, "mean_collision");
  r.mean_steps = get<double>(j, "mean_steps");
  for (const auto& t : j.at("tasks")) {
    TaskReport tr;
    tr.task = get<std::string>(t, "task");
    tr.episodes = get<int>(t, "episodes");
    tr.success_rate = get<double>(t, "success_rate");
    tr.collision_rate = get<double>(t, "collision_rate");
    tr.mean_steps = get<double>(t, "mean_steps");
    for (const auto& e : t.at("results")) tr.results.push_back(episode_from(e));
    r.tasks.push_back(std::move(tr));
  }
  return r;
}

json to_json(const TaskSpec& t) {
  return {{"id", t.id},
          {"kind", to_string(t.kind)},
          {"left_base", {t.left_geom.base.x(), t.left_geom.base.y()}},
          {"right_base", {t.right_geom.base.x(), t.right_geom.base.y()}},
          {"links", {t.left_geom.l1, t.left_geom.l2}},
          {"episode_length", t.episode_length},
          {"demo_noise", t.demo_noise},
          {"d_safe", t.d_safe},
          {"coord_d_safe", t.coord_d_safe},
          {"goal_tol", t.goal_tol},
          {"grip_tol", t.grip_tol},
          {"final_window", t.final_window},
          {"sync_window", t.sync_window},
          {"band", {t.band_low, t.band_high}},
          {"max_step", t.max_step},
          {"peak_speed", t.peak_speed}};
}

TaskSpec task_spec_from(const json& j) {
  static const std::vector<std::string> known = {"id",           "kind",         "left_base",      "right_base",
                                                 "links",        "episode_length", "demo_noise",   "d_safe",
                                                 "coord_d_safe", "goal_tol",     "grip_tol",       "final_window",
                                                 "sync_window",  "band",         "max_step",       "peak_speed"};
  if (!j.is_object()) throw SchemaError("task spec must be an object");
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw SchemaError("task spec: unknown key '" + k + "'");
  TaskSpec t = TaskSpec::defaults(task_kind_from_string(get<std::string>(j, "kind")));
  t.id = j.value("id", t.id);
  auto xy = [](const json& a) { return Eigen::Vector2d(a.at(0).get<double>(), a.at(1).get<double>()); };
  if (j.contains("left_base")) t.left_geom.base = xy(j["left_base"]);
  if (j.contains("right_base")) t.right_geom.base = xy(j["right_base"]);
  if (j.contains("links")) {
    const auto l = xy(j["links"]);
    t.left_geom.l1 = t.right_geom.l1 = l.x();
    t.left_geom.l2 = t.right_geom.l2 = l.y();
  }
  t.episode_length = j.value("episode_length", t.episode_length);
  t.demo_noise = j.value("demo_noise", t.demo_noise);
  t.d_safe = j.value("d_safe", t.d_safe);
  t.coord_d_safe = j.value("coord_d_safe", t.coord_d_safe);
  t.goal_tol = j.value("goal_tol", t.goal_tol);
  t.grip_tol = j.value("grip_tol", t.grip_tol);
  t.final_window = j.value("final_window", t.final_window);
  t.sync_window = j.value("sync_window", t.sync_window);
  if (j.contains("band")) {
    const auto b = xy(j["band"]);
    t.band_low = b.x();
    t.band_high = b.y();
  }
  t.max_step = j.value("max_step", t.max_step);
  t.peak_speed = j.value("peak_speed", t.peak_speed);
  t.validate();
  return t;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing", path);
  out << text;
  if (!out) throw IoError("write failed", path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const std::filesystem::path& path, const json& j, int indent) {
  write_text(path, j.dump(indent) + "\n");
}

json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json envelope(const std::string& kind, const std::string& config_hash, json data) {
  return {{"schema_version", kSchemaVersion}, {"kind", kind}, {"config_hash", config_hash}, {"data", std::move(data)}};
}

const json& open_envelope(const json& j, const std::string& kind) {
  if (!j.is_object() || !j.contains("schema_version") || !j.contains("kind") || !j.contains("data"))
    throw SchemaError("not a coordflow artifact (missing envelope fields)");
  if (j["schema_version"] != kSchemaVersion)
    throw SchemaError("unsupported schema_version " + j["schema_version"].dump());
  if (j["kind"] != kind) throw SchemaError("expected artifact kind '" + kind + "', got " + j["kind"].dump());
  return j["data"];
}

}  // namespace coordflow
