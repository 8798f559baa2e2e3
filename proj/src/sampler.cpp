#include "coordflow/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace coordflow {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::fixed: return "fixed";
    case Strategy::adaptive: return "adaptive";
    case Strategy::early_stop: return "early-stop";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "fixed") return Strategy::fixed;
  if (s == "adaptive") return Strategy::adaptive;
  if (s == "early-stop" || s == "early_stop") return Strategy::early_stop;
  throw std::invalid_argument("unknown strategy '" + s + "' (expected fixed, adaptive or early-stop)");
}

std::string to_string(CoordMode m) { return m == CoordMode::clean_descent ? "clean_descent" : "gradient"; }

CoordMode coord_mode_from_string(const std::string& s) {
  if (s == "clean_descent") return CoordMode::clean_descent;
  if (s == "gradient") return CoordMode::gradient;
  throw std::invalid_argument("unknown coordination mode '" + s + "'");
}

std::string to_string(Termination r) {
  switch (r) {
    case Termination::budget: return "budget";
    case Termination::early_energy: return "early_energy";
    case Termination::fixed: return "fixed";
  }
  return "?";
}

void SamplerConfig::validate() const {
  if (n_max < 1) throw std::invalid_argument("sampler: n_max must be >= 1");
  if (std::isnan(tau_low) || std::isnan(tau_high)) throw std::invalid_argument("sampler: thresholds must not be NaN");
  const bool sentinel = std::isinf(tau_low) && tau_low == tau_high;
  if (!(tau_low < tau_high) && !sentinel) throw std::invalid_argument("sampler: tau_low must be < tau_high");
  if (!(coord_step > 0.0)) throw std::invalid_argument("sampler: coord_step must be positive");
}

namespace {

Vec scale(const ArmVec& v, const Vec& s) { return (v.array() * s.array()).matrix(); }
Vec unscale(const ArmVec& v, const Vec& s) { return (v.array() / s.array()).matrix(); }

}  // namespace

FieldEval evaluate_field(const ArmPair& state, double t, const SamplerContext& ctx, const SamplerConfig& cfg) {
  if (!ctx.field) throw std::invalid_argument("sampler: context has no field");
  const BimanualField& field = *ctx.field;
  FieldEval out;
  out.v_generative = field.velocity(state, t);
  out.v_total = out.v_generative;
  const double e_comp = field.energy_proxy_given(state, t, out.v_generative);

  if (ctx.coordination_active()) {
    const Vec& sl = field.left_normalizer().std;
    const Vec& sr = field.right_normalizer().std;
    if (cfg.coord_mode == CoordMode::clean_descent) {
      const double remaining = 1.0 - t;
      const BimanualAction x = field.to_physical(state + out.v_generative * remaining);
      if (remaining > 0.0) {
        const CoordDescent d = coordination_descent(x, *ctx.history, ctx.weights, ctx.coord, cfg.coord_step);
        out.energy = d.before;
        out.v_total.left += unscale(d.delta.left, sl) / remaining;
        out.v_total.right += unscale(d.delta.right, sr) / remaining;
      } else {
        out.energy = coord_energy(x, *ctx.history, ctx.weights, ctx.coord);
      }
    } else {
      const BimanualAction x = field.to_physical(state);
      const TermArray w = ctx.weights ? predict_weights(*ctx.weights, x, *ctx.history) : uniform_weights();
      out.energy = coord_energy_weighted(x, *ctx.history, w, ctx.coord);
      const ActionGrad g = coord_gradient_weighted(x, *ctx.history, w, ctx.coord);
      // d/dz of E(mean + std * z) = std * dE/da
      out.v_total.left -= scale(g.left, sl);
      out.v_total.right -= scale(g.right, sr);
    }
  }
  out.energy.e_comp = e_comp;
  out.energy.e_total = e_comp + out.energy.e_coord;
  return out;
}

ArmPair total_velocity(const ArmPair& state, double t, const SamplerContext& ctx, const SamplerConfig& cfg) {
  return evaluate_field(state, t, ctx, cfg).v_total;
}

int step_budget(double initial_energy, const SamplerConfig& cfg) {
  if (initial_energy < cfg.tau_low) return 1;
  if (initial_energy > cfg.tau_high) return cfg.n_max;
  if (!(cfg.tau_high > cfg.tau_low)) return cfg.n_max;
  const double frac = (initial_energy - cfg.tau_low) / (cfg.tau_high - cfg.tau_low);
  const auto n = static_cast<int>(std::round(1.0 + frac * (cfg.n_max - 1)));
  return std::clamp(n, 1, cfg.n_max);
}

ArmPair initial_noise(const SamplerContext& ctx, const SamplerConfig& cfg) {
  if (ctx.initial_state) return *ctx.initial_state;
  Rng rng(cfg.seed);
  ArmPair s;
  s.left = rng.normal_vec(ctx.field->left_dim());
  s.right = rng.normal_vec(ctx.field->right_dim());
  return s;
}

namespace {

// Euler integration over [0, 1] in `n` steps. With `stop_below` set, stops as
// soon as the post-step energy falls below it.
DenoiseResult integrate(const SamplerContext& ctx, const SamplerConfig& cfg, ArmPair state, FieldEval cur, int n,
                        std::optional<double> stop_below, Termination exhausted) {
  DenoiseResult out;
  auto& tr = out.trace;
  tr.initial_energy = cur.energy.e_total;
  tr.budget = n;
  tr.ik_flagged = cur.energy.ik_flagged;
  tr.reason = exhausted;
  const double dt = 1.0 / n;
  for (int k = 0; k < n; ++k) {
    state = state + cur.v_total * dt;
    const double t_next = static_cast<double>(k + 1) / n;
    if (!state.all_finite()) {
      tr.steps_used = k + 1;
      throw DenoiseDiverged("denoise: non-finite state at step " + std::to_string(k + 1), tr);
    }
    cur = evaluate_field(state, t_next, ctx, cfg);
    tr.steps.push_back({t_next, cur.energy.e_total, state});
    tr.steps_used = k + 1;
    tr.ik_flagged = tr.ik_flagged || cur.energy.ik_flagged;
    if (stop_below && cur.energy.e_total < *stop_below) {
      tr.reason = Termination::early_energy;
      // Close the remaining interval with the velocity already evaluated for
      // the energy check, so the output is a completed sample.
      if (t_next < 1.0) state = state + cur.v_total * (1.0 - t_next);
      break;
    }
  }
  tr.final_energy = cur.energy;
  out.state = std::move(state);
  return out;
}

}  // namespace

DenoiseResult denoise_fixed(const SamplerContext& ctx, const SamplerConfig& cfg) {
  cfg.validate();
  ArmPair a0 = initial_noise(ctx, cfg);
  FieldEval e0 = evaluate_field(a0, 0.0, ctx, cfg);
  return integrate(ctx, cfg, std::move(a0), std::move(e0), cfg.n_max, std::nullopt, Termination::fixed);
}

DenoiseResult denoise_adaptive(const SamplerContext& ctx, const SamplerConfig& cfg) {
  cfg.validate();
  ArmPair a0 = initial_noise(ctx, cfg);
  FieldEval e0 = evaluate_field(a0, 0.0, ctx, cfg);
  const int n = step_budget(e0.energy.e_total, cfg);
  return integrate(ctx, cfg, std::move(a0), std::move(e0), n, std::nullopt, Termination::budget);
}

DenoiseResult denoise_early_stop(const SamplerContext& ctx, const SamplerConfig& cfg) {
  cfg.validate();
  ArmPair a0 = initial_noise(ctx, cfg);
  FieldEval e0 = evaluate_field(a0, 0.0, ctx, cfg);
  return integrate(ctx, cfg, std::move(a0), std::move(e0), cfg.n_max, cfg.tau_low, Termination::budget);
}

DenoiseResult denoise(const SamplerContext& ctx, const SamplerConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::fixed: return denoise_fixed(ctx, cfg);
    case Strategy::adaptive: return denoise_adaptive(ctx, cfg);
    case Strategy::early_stop: return denoise_early_stop(ctx, cfg);
  }
  throw std::invalid_argument("denoise: bad strategy");
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: empty sample");
  if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile: p must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Thresholds calibrate_thresholds(const std::vector<double>& energies, double p_low, double p_high) {
  if (energies.empty()) throw DegenerateDistribution("calibrate: empty energy distribution");
  if (!(p_low < p_high)) throw std::invalid_argument("calibrate: percentiles must satisfy low < high");
  Thresholds th{percentile(energies, p_low), percentile(energies, p_high)};
  if (!(th.tau_low < th.tau_high))
    throw DegenerateDistribution("calibrate: degenerate energy distribution (tau_low == tau_high == " +
                                 std::to_string(th.tau_low) + ")");
  return th;
}

}  // namespace coordflow
