#include "coordflow/cli.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace coordflow;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("coordflow_test_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny(const std::string& name) {
  RunConfig c;
  c.experiment = "tiny";
  c.seed = 3;
  c.out_dir = fresh_dir(name);
  c.unimanual_demos = 4;
  c.bimanual_demos = 2;
  c.policy.hidden_dims = {8};
  c.policy.epochs = 3;
  c.weights.epochs = 1;
  c.weights.max_samples = 16;
  c.episodes = 2;
  return c;
}

std::string bytes(const fs::path& p) { return read_text(p); }

}  // namespace

TEST_CASE("config round-trips and rejects unknown keys") {
  RunConfig c = tiny("config");
  c.sampler.tau_low = -std::numeric_limits<double>::infinity();
  c.sampler.tau_high = -std::numeric_limits<double>::infinity();
  c.thresholds = ThresholdSource::calibrated;
  const json j = to_json(c);
  const RunConfig back = run_config_from(json::parse(j.dump()));
  CHECK(to_json(back).dump() == j.dump());
  CHECK(config_hash(back) == config_hash(c));

  json bad = j;
  bad["policy"]["epochz"] = 3;
  CHECK_THROWS_AS(run_config_from(bad), SchemaError);
  bad = j;
  bad["extra"] = 1;
  CHECK_THROWS_AS(run_config_from(bad), SchemaError);
  bad = j;
  bad["eval"]["episodes"] = "many";
  CHECK_THROWS(run_config_from(bad));
  CHECK_NOTHROW(run_config_from(json::object()));
}

TEST_CASE("config hash ignores the output directory and thread count") {
  RunConfig a = tiny("hash_a"), b = tiny("hash_b");
  b.threads = 4;
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 4;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("ablation labels parse back") {
  for (const Ablation& a : RunConfig{}.ablations) CHECK(ablation_from_label(a.label()).label() == a.label());
  CHECK_THROWS(ablation_from_label("compose+bogus"));
}

TEST_CASE("eval rows: first strategy under every ablation, others under the first") {
  const auto rows = eval_rows(RunConfig{});
  REQUIRE(rows.size() == 7);
  CHECK(rows[0].label() == "fixed/full");
  CHECK(rows[4].label() == "fixed/none");
  CHECK(rows[5].label() == "adaptive/full");
  CHECK(rows[6].label() == "early-stop/full");
}

TEST_CASE("gen-data is byte-identical across runs and round-trips") {
  RunConfig a = tiny("gen_a"), b = tiny("gen_b");
  const GenDataOutput out = cmd_gen_data(a);
  cmd_gen_data(b);
  const RunPaths pa{a.out_dir}, pb{b.out_dir};
  CHECK(bytes(pa.arm_demos("left")) == bytes(pb.arm_demos("left")));
  CHECK(bytes(pa.arm_demos("right")) == bytes(pb.arm_demos("right")));
  for (const auto& t : a.tasks) CHECK(bytes(pa.task_demos(t.id)) == bytes(pb.task_demos(t.id)));

  const json file = read_json(pa.arm_demos("left"));
  const json& left = open_envelope(file, "arm_demos");
  REQUIRE(left.size() == out.left.size());
  for (std::size_t i = 0; i < out.left.size(); ++i) {
    const ArmDemonstration d = arm_demo_from(left[i]);
    CHECK(to_json(d).dump() == to_json(out.left[i]).dump());
    CHECK(d.steps.back().action.v == out.left[i].steps.back().action.v);
  }
  CHECK(out.bimanual.size() == a.tasks.size() * 2);
}

TEST_CASE("artifacts carry the envelope and reject the wrong kind") {
  RunConfig c = tiny("envelope");
  cmd_gen_data(c);
  const json j = read_json(RunPaths{c.out_dir}.arm_demos("left"));
  CHECK(j.at("schema_version") == kSchemaVersion);
  CHECK(j.at("config_hash") == config_hash(c));
  CHECK_THROWS_AS(open_envelope(j, "report"), SchemaError);
  json old = j;
  old["schema_version"] = 99;
  CHECK_THROWS_AS(open_envelope(old, "arm_demos"), SchemaError);
}

TEST_CASE("train without generated data names the missing file") {
  RunConfig c = tiny("missing");
  try {
    cmd_train(c);
    FAIL("expected MissingArtifact");
  } catch (const MissingArtifact& e) {
    CHECK(e.path() == RunPaths{c.out_dir}.arm_demos("left"));
  }
}

TEST_CASE("no bimanual demos: uniform weights, noted in the manifest") {
  RunConfig c = tiny("no_bimanual");
  c.bimanual_demos = 0;
  c.ablations = {Ablation{}};
  c.strategies = {Strategy::fixed};
  cmd_gen_data(c);
  const TrainOutput t = cmd_train(c);
  CHECK(t.weights.fallback_uniform);
  const std::string manifest = read_json(RunPaths{c.out_dir}.manifest("train")).dump();
  CHECK(manifest.find("uniform") != std::string::npos);
  CHECK_THROWS_AS(cmd_calibrate(c), DegenerateDistribution);
  CHECK_NOTHROW(cmd_eval(c));
}

TEST_CASE("pipeline: deterministic training, consistent logs and exports") {
  RunConfig a = tiny("pipe_a"), b = tiny("pipe_b");
  for (RunConfig* c : {&a, &b}) {
    cmd_gen_data(*c);
    cmd_train(*c);
  }
  const RunPaths pa{a.out_dir}, pb{b.out_dir};
  for (const char* name : {"left", "right", "joint", "weights"})
    CHECK(bytes(pa.checkpoint(name)) == bytes(pb.checkpoint(name)));

  const json report = cmd_eval(a);
  cmd_eval(b);
  CHECK(bytes(pa.report()) == bytes(pb.report()));

  // Row labels include the no-composition row.
  bool saw_none = false;
  for (const auto& row : report.at("rows")) saw_none = saw_none || row.at("label") == "fixed/none";
  CHECK(saw_none);

  // Success rates recomputed from the trajectory log equal the report.
  const auto from_log = success_from_log(pa.trajectory_log());
  for (const auto& row : report.at("rows"))
    for (const auto& task : row.at("suite").at("tasks")) {
      const auto key = std::make_pair(row.at("label").get<std::string>(), task.at("task").get<std::string>());
      REQUIRE(from_log.count(key) == 1);
      CHECK(from_log.at(key) == doctest::Approx(task.at("success_rate").get<double>()));
    }

  // Histogram counts add up to episodes x control steps per row.
  const auto hist = csv_parse_strict(bytes(pa.step_histogram()));
  std::map<std::string, long> per_row;
  for (std::size_t i = 1; i < hist.size(); ++i) per_row[hist[i][2]] += std::stol(hist[i][6]);
  long expected = 0;
  for (const auto& t : a.tasks) expected += static_cast<long>(a.episodes) * t.episode_length;
  REQUIRE(per_row.size() == eval_rows(a).size());
  for (const auto& [row, n] : per_row) CHECK(n == expected);

  // Export is idempotent and strict.
  const fs::path plots = a.out_dir / "plots";
  cmd_export_plots(pa.report(), plots);
  const std::string first = bytes(plots / "ablation.csv");
  cmd_export_plots(pa.report(), plots);
  CHECK(bytes(plots / "ablation.csv") == first);
  CHECK(bytes(plots / "step_histogram.csv") == bytes(pa.step_histogram()));

  // Calibration writes ordered thresholds.
  const Thresholds th = cmd_calibrate(a);
  CHECK(th.tau_low < th.tau_high);
  CHECK(fs::exists(pa.thresholds()));
}

TEST_CASE("export rejects malformed reports") {
  const fs::path dir = fresh_dir("bad_report");
  write_json(dir / "report.json", json{{"schema_version", kSchemaVersion}, {"kind", "report"}, {"data", 3}});
  CHECK_THROWS(cmd_export_plots(dir / "report.json", dir / "plots"));
  write_json(dir / "other.json", json{{"hello", "world"}});
  CHECK_THROWS_AS(cmd_export_plots(dir / "other.json", dir / "plots"), SchemaError);
  CHECK_THROWS_AS(cmd_export_plots(dir / "absent.json", dir / "plots"), IoError);
}

TEST_CASE("strict CSV") {
  const std::vector<std::vector<std::string>> rows{{"a", "b"}, {"1", "2"}};
  CHECK(csv_parse_strict(csv_join(rows)) == rows);
  CHECK_THROWS(csv_parse_strict("a,b\n1\n"));
  CHECK_THROWS(csv_parse_strict(""));
}

TEST_CASE("error records carry type and exit code") {
  std::ostringstream err;
  ExitCode code;
  try {
    throw MissingArtifact("missing input", "/nowhere/demo.json");
  } catch (...) {
    code = report_current_exception(err);
  }
  CHECK(code == ExitCode::io_failure);
  const json rec = json::parse(err.str());
  CHECK(rec.at("error").at("type") == "missing_artifact");
  CHECK(rec.at("error").at("path") == "/nowhere/demo.json");
  CHECK(rec.at("error").at("exit_code") == 4);
}
