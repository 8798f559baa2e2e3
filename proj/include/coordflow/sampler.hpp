// Bimanual denoising: fixed-step Euler, energy-budgeted and early-stopping
// variants, all integrating the generative field plus coordination.
#pragma once

#include "coordflow/coordination.hpp"

#include <optional>
#include <string>
#include <vector>

namespace coordflow {

enum class Strategy { fixed, adaptive, early_stop };
std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);  // accepts early-stop and early_stop

/// How the coordination energies enter the velocity.
///   clean_descent: one backtracking descent step on E_coord taken at the
///     flow's clean estimate a + (1 - t) v, spread over the remaining time.
///   gradient: v_gen - grad E_coord at the current state (normalized chain rule).
enum class CoordMode { clean_descent, gradient };
std::string to_string(CoordMode m);
CoordMode coord_mode_from_string(const std::string& s);

struct SamplerConfig {
  Strategy strategy = Strategy::fixed;
  int n_max = 5;
  double tau_low = 4.0;
  double tau_high = 10.0;
  GuidanceWeights guidance;
  std::uint64_t seed = 0;
  CoordMode coord_mode = CoordMode::clean_descent;
  double coord_step = 1.0;  // largest descent step tried (clean_descent)

  /// tau_low < tau_high, except that equal infinite sentinels are allowed.
  void validate() const;
};

struct SamplerContext {
  const BimanualField* field = nullptr;
  const PoseHistory* history = nullptr;  // required when coordination is on
  const WeightNet* weights = nullptr;    // nullptr: uniform weights
  CoordConfig coord;
  bool coordination = true;
  std::optional<ArmPair> initial_state;  // default: N(0, I) from the sampler seed

  bool coordination_active() const { return coordination && history && coord.any_enabled(); }
};

enum class Termination { budget, early_energy, fixed };
std::string to_string(Termination r);

struct DenoiseStep {
  double t = 0.0;             // time reached after the step
  double energy_after = 0.0;  // E_total at the post-step state
  ArmPair state;              // normalized coordinates
};

struct DenoiseTrace {
  double initial_energy = 0.0;
  int budget = 0;  // planned steps
  int steps_used = 0;
  Termination reason = Termination::fixed;
  std::vector<DenoiseStep> steps;
  EnergyBreakdown final_energy;
  bool ik_flagged = false;
};

struct DenoiseResult {
  ArmPair state;  // final normalized state
  DenoiseTrace trace;

  BimanualAction action(const BimanualField& field) const { return field.to_physical(state); }
};

class DenoiseDiverged : public NumericError {
 public:
  DenoiseDiverged(const std::string& what, DenoiseTrace trace) : NumericError(what), trace_(std::move(trace)) {}
  const DenoiseTrace& trace() const { return trace_; }

 private:
  DenoiseTrace trace_;
};

/// Velocity and energy at one state.
struct FieldEval {
  ArmPair v_generative;
  ArmPair v_total;
  EnergyBreakdown energy;
};
FieldEval evaluate_field(const ArmPair& state, double t, const SamplerContext& ctx, const SamplerConfig& cfg);

ArmPair total_velocity(const ArmPair& state, double t, const SamplerContext& ctx, const SamplerConfig& cfg);

/// E < tau_low -> 1; E > tau_high -> n_max; otherwise linear interpolation
/// rounded half away from zero.
int step_budget(double initial_energy, const SamplerConfig& cfg);

ArmPair initial_noise(const SamplerContext& ctx, const SamplerConfig& cfg);

DenoiseResult denoise_fixed(const SamplerContext& ctx, const SamplerConfig& cfg);
DenoiseResult denoise_adaptive(const SamplerContext& ctx, const SamplerConfig& cfg);
/// Steps on the n_max schedule, stopping once the post-step energy is below
/// tau_low; a stop at t < 1 finishes with one Euler step of length 1 - t
/// using the velocity already evaluated at the stopping state.
DenoiseResult denoise_early_stop(const SamplerContext& ctx, const SamplerConfig& cfg);
/// Dispatches on cfg.strategy.
DenoiseResult denoise(const SamplerContext& ctx, const SamplerConfig& cfg);

/// Linear-interpolation percentile (p in [0, 100]).
double percentile(std::vector<double> values, double p);

class DegenerateDistribution : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Thresholds {
  double tau_low;
  double tau_high;
};
/// Percentile-matched thresholds; throws DegenerateDistribution unless low < high.
Thresholds calibrate_thresholds(const std::vector<double>& energies, double p_low = 30.0, double p_high = 90.0);

}  // namespace coordflow
