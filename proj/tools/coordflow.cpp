// coordflow: gen-data | train | calibrate | eval | export-plots
#include "coordflow/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace coordflow;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string strategy;
  std::vector<std::string> ablate;
  std::optional<int> episodes;
  std::string report;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "run configuration (JSON); defaults apply when omitted")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
  cmd->add_option("--out", o.out, "output directory (overrides COORDFLOW_OUT and the config)");
}

void add_eval_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--strategy", o.strategy, "sampler strategy")
      ->check(CLI::IsMember({"fixed", "adaptive", "early-stop"}));
  cmd->add_option("--ablate", o.ablate, "disable a component of the full configuration (repeatable)")
      ->check(CLI::IsMember({"compose", "temporal", "spatial"}))
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  cmd->add_option("--episodes", o.episodes, "episodes per task")->check(CLI::PositiveNumber);
}

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : run_config_from(read_json(o.config));
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty())
    c.out_dir = o.out;
  else if (const char* env = std::getenv("COORDFLOW_OUT"); env && *env)
    c.out_dir = env;
  if (!o.strategy.empty()) c.strategies = {strategy_from_string(o.strategy)};
  if (!o.ablate.empty()) {
    Ablation a;
    for (const auto& name : o.ablate) {
      if (name == "compose") a.compose = false;
      if (name == "temporal") a.temporal = false;
      if (name == "spatial") a.spatial = false;
    }
    c.ablations = {a};
  }
  if (o.episodes) c.episodes = *o.episodes;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional bimanual flow policies with coordination energies"};
  app.require_subcommand(1);
  Options o;
  auto* gen = app.add_subcommand("gen-data", "generate unimanual and bimanual demonstrations");
  auto* train = app.add_subcommand("train", "train both arm policies, the joint baseline and the weight net");
  auto* calib = app.add_subcommand("calibrate", "set adaptive thresholds from the training energy distribution");
  auto* eval = app.add_subcommand("eval", "evaluate strategies and ablations on the task suite");
  auto* plots = app.add_subcommand("export-plots", "write histogram and ablation CSVs from a report");
  for (auto* cmd : {gen, train, calib, eval, plots}) add_common(cmd, o);
  add_eval_flags(eval, o);
  plots->add_option("--report", o.report, "report to export (default: <out>/eval/report.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", {{"type", "usage"}, {"message", e.what()}, {"exit_code", static_cast<int>(ExitCode::usage)}}}}.dump()
              << "\n";
    return static_cast<int>(ExitCode::usage);
  }

  try {
    const RunConfig c = resolve(o);
    const RunPaths paths{c.out_dir};
    if (gen->parsed()) {
      const GenDataOutput d = cmd_gen_data(c);
      std::cout << "demos: " << d.left.size() << " left, " << d.right.size() << " right, " << d.bimanual.size()
                << " bimanual -> " << (c.out_dir / "demos").string() << "\n";
    } else if (train->parsed()) {
      const TrainOutput t = cmd_train(c);
      std::cout << "final loss: left " << t.left.final_loss << ", right " << t.right.final_loss << ", weights "
                << t.weights.final_loss << (t.weights.fallback_uniform ? " (uniform fallback)" : "") << "\n";
    } else if (calib->parsed()) {
      const Thresholds th = cmd_calibrate(c);
      std::cout << "tau_low " << th.tau_low << ", tau_high " << th.tau_high << " -> " << paths.thresholds().string()
                << "\n";
    } else if (eval->parsed()) {
      cmd_eval(c);
      std::cout << read_text(paths.summary());
    } else if (plots->parsed()) {
      const std::filesystem::path report = o.report.empty() ? paths.report() : std::filesystem::path(o.report);
      cmd_export_plots(report, c.out_dir / "plots");
      std::cout << "wrote " << (c.out_dir / "plots").string() << "/{step_histogram,ablation}.csv\n";
    }
  } catch (...) {
    return static_cast<int>(report_current_exception(std::cerr));
  }
  return 0;
}
