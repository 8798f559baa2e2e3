// Pipeline commands behind the command-line tool: data generation, training,
// threshold calibration, evaluation and CSV export. Every artifact is a JSON
// envelope (or CSV with the same two provenance columns) stamped with the
// hash of the producing configuration.
#pragma once

#include "coordflow/io.hpp"

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace coordflow {

/// Seed streams split from the master seed.
enum class SeedStream : std::uint64_t {
  left_demos = 1,
  right_demos = 2,
  bimanual_demos = 3,  // then split by task index
  left_policy = 4,
  right_policy = 5,
  joint_policy = 6,
  weight_net = 7,
  calibration = 8,
  evaluation = 9,
};
std::uint64_t stream_seed(std::uint64_t master, SeedStream s);

Ablation ablation_from_label(const std::string& label);

enum class ThresholdSource { config, calibrated };

struct RunConfig {
  std::string experiment = "default";
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";
  std::vector<TaskSpec> tasks = default_suite();

  int unimanual_demos = 100;  // per arm
  double unimanual_noise = 0.01;
  int bimanual_demos = 20;  // per task

  FlowHyper policy = default_policy_hyper();
  WeightTrainHyper weights = default_weight_hyper();
  SamplerConfig sampler = default_sampler();

  double calib_low = 30.0;
  double calib_high = 90.0;

  int episodes = 20;
  std::vector<Strategy> strategies{Strategy::fixed, Strategy::adaptive, Strategy::early_stop};
  std::vector<Ablation> ablations{{true, true, true}, {true, true, false}, {true, false, true}, {true, false, false},
                                  {false, false, false}};
  ThresholdSource thresholds = ThresholdSource::config;
  int threads = 1;

  void validate() const;

  static FlowHyper default_policy_hyper();
  static WeightTrainHyper default_weight_hyper();
  static SamplerConfig default_sampler();
};

/// Missing keys take the defaults above; unknown keys are rejected.
RunConfig run_config_from(const json& j);
json to_json(const RunConfig& c);
/// Hash of everything that influences results (output directory and thread
/// count excluded).
std::string config_hash(const RunConfig& c);

/// One evaluated row: the first strategy is run under every ablation, the
/// others under the first ablation only.
struct EvalRow {
  Strategy strategy;
  Ablation ablation;
  std::string label() const;
};
std::vector<EvalRow> eval_rows(const RunConfig& c);

/// Artifact layout under the output directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path arm_demos(const std::string& arm) const { return root / "demos" / ("unimanual_" + arm + ".json"); }
  std::filesystem::path task_demos(const std::string& task) const { return root / "demos" / ("bimanual_" + task + ".json"); }
  std::filesystem::path checkpoint(const std::string& name) const { return root / "checkpoints" / (name + ".json"); }
  std::filesystem::path loss_csv(const std::string& name) const { return root / "checkpoints" / ("loss_" + name + ".csv"); }
  std::filesystem::path manifest(const std::string& command) const { return root / ("manifest_" + command + ".json"); }
  std::filesystem::path thresholds() const { return root / "thresholds.json"; }
  std::filesystem::path report() const { return root / "eval" / "report.json"; }
  std::filesystem::path summary() const { return root / "eval" / "summary.txt"; }
  std::filesystem::path trajectory_log() const { return root / "eval" / "trajectories.ndjson"; }
  std::filesystem::path step_histogram() const { return root / "eval" / "step_histogram.csv"; }
};

/// Raised when an input artifact of a command does not exist.
class MissingArtifact : public IoError {
 public:
  using IoError::IoError;
};

struct GenDataOutput {
  std::vector<ArmDemonstration> left, right;
  std::vector<Demonstration> bimanual;
};
GenDataOutput cmd_gen_data(const RunConfig& c);

struct TrainOutput {
  PolicyCheckpoint left, right, joint;
  WeightTrainReport weights;
};
TrainOutput cmd_train(const RunConfig& c);

Thresholds cmd_calibrate(const RunConfig& c);

/// Returns the report payload (the "data" member of report.json).
json cmd_eval(const RunConfig& c);

/// Writes step_histogram.csv and ablation.csv into `out_dir`.
void cmd_export_plots(const std::filesystem::path& report, const std::filesystem::path& out_dir);

/// Strict CSV: header plus rows of equal width; no quoting needed for our
/// fields. Used by the exporters and their round-trip checks.
std::string csv_join(const std::vector<std::vector<std::string>>& rows);
std::vector<std::vector<std::string>> csv_parse_strict(const std::string& text);

/// Success rate per (row label, task) recomputed from a trajectory log.
std::map<std::pair<std::string, std::string>, double> success_from_log(const std::filesystem::path& log);

/// Exit codes of the command-line tool.
enum class ExitCode : int { ok = 0, failure = 1, usage = 2, bad_config = 3, io_failure = 4, degenerate = 5, numeric = 6 };

/// Renders the exception currently being handled as a one-line JSON error
/// record and returns the matching exit code.
ExitCode report_current_exception(std::ostream& err);

}  // namespace coordflow
