// Acceptance checks 1-11: one PASS/FAIL line per criterion, exit status 1 if
// any fails. Usage: acceptance [work_dir]
#include "coordflow/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>

using namespace coordflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void run(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) {
    o.pass = false;
    o.detail += "; over the time limit";
  }
  if (!o.pass) ++failures;
  std::printf("criterion %2d: %-28s %s  (%s; %.1f s of %.0f s)\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
              secs, limit_s);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Conditioning small_cond() {
  Conditioning c;
  c.observation = Vec::Constant(2, 0.5);
  c.proprio = Vec::Constant(1, -0.5);
  c.instruction = Vec::Zero(0);
  return c;
}

FlowHyper sanity_hyper(int epochs, std::uint64_t seed) {
  FlowHyper h;
  h.hidden_dims = {64, 64};
  h.epochs = epochs;
  h.batch_size = 32;
  h.lr = 2e-3;
  h.lr_final = 1e-5;
  h.seed = seed;
  return h;
}

// Central differences of f over all 14 action coordinates.
ActionGrad fd_grad(const BimanualAction& a, const std::function<double(const BimanualAction&)>& f) {
  const double h = 1e-6;
  ActionGrad g;
  for (int side = 0; side < 2; ++side)
    for (int i = 0; i < kArmDim; ++i) {
      BimanualAction p = a, m = a;
      (side ? p.right : p.left).v[i] += h;
      (side ? m.right : m.left).v[i] -= h;
      (side ? g.right : g.left)[i] = (f(p) - f(m)) / (2 * h);
    }
  return g;
}

double rel_error(const ActionGrad& x, const ActionGrad& y) {
  const double diff = std::sqrt((x.left - y.left).squaredNorm() + (x.right - y.right).squaredNorm());
  return diff / std::max({std::sqrt(x.squared_norm()), std::sqrt(y.squared_norm()), 1e-8});
}

Outcome gradient_fidelity() {
  // Clearances large enough that both hinge terms are active everywhere.
  CoordConfig cfg;
  cfg.d_safe = 3.0;
  cfg.d_safe_joint = 10.0;
  Rng rng(1);
  std::array<double, kNumTerms> worst{};
  for (int s = 0; s < 200; ++s) {
    const auto joints = [&] {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      return JointConfig{rng.uniform(-std::numbers::pi, std::numbers::pi), sign * rng.uniform(0.4, 2.7)};
    };
    const JointConfig ql = joints(), qr = joints();
    ArmVec l = rng.normal_vec(kArmDim), r = rng.normal_vec(kArmDim);
    l.head<2>() = forward_kin(cfg.left_geom, ql);
    r.head<2>() = forward_kin(cfg.right_geom, qr);
    const BimanualAction a{ArmAction(l), ArmAction(r)};
    PoseHistory h;
    for (auto& p : h.past)
      p = {ArmAction(ArmVec(l + 0.3 * rng.normal_vec(kArmDim))), ArmAction(ArmVec(r + 0.3 * rng.normal_vec(kArmDim)))};
    h.joints_left = ql;
    h.joints_right = qr;
    const auto g = term_gradients(a, h, cfg);
    const std::array<std::function<double(const BimanualAction&)>, kNumTerms> f{
        [&](const BimanualAction& x) { return e_vel(x, h, cfg); },
        [&](const BimanualAction& x) { return e_accel(x, h, cfg); },
        [&](const BimanualAction& x) { return e_jerk(x, h, cfg); },
        [&](const BimanualAction& x) { return e_sync(x, h, cfg); },
        [&](const BimanualAction& x) { return e_ee(x, cfg); },
        [&](const BimanualAction& x) { return e_joint(x, h, cfg); }};
    for (int k = 0; k < kNumTerms; ++k) worst[k] = std::max(worst[k], rel_error(g[k], fd_grad(a, f[k])));
  }
  const double m = *std::max_element(worst.begin(), worst.end());
  return {m < 1e-4, fmt("max relative error %.2e over 6 terms x 200 states", m)};
}

Outcome deterministic_limit() {
  PolicyCheckpoint ck = zero_checkpoint(7, static_cast<int>(small_cond().dim()), {64, 64});
  Rng init(2);
  ck.params = Mlp::glorot(ck.params.spec, init);
  Rng rng(3);
  int identical = 0;
  for (int i = 0; i < 100; ++i) {
    const Vec a = rng.normal_vec(7);
    const double t = rng.uniform(), dt = 0.2;
    const VelocityFn field = [&](const Vec& x, double s) { return velocity(ck, x, s, small_cond()); };
    const Vec l = langevin_step(field, a, t, dt, 0.0, rng);
    const Vec e = euler_step(field, a, t, dt);
    identical += (l.array() == e.array()).all();
  }
  return {identical == 100, fmt("%.0f / 100 states bit-identical", identical)};
}

Outcome gaussian_product() {
  const VelocityFn v1 = [](const Vec& x, double) -> Vec { return -(x.array() - 1.0).matrix(); };
  const VelocityFn v2 = [](const Vec& x, double) -> Vec { return -(x.array() + 1.0).matrix(); };
  const VelocityFn sum = [&](const Vec& x, double t) -> Vec { return v1(x, t) + v2(x, t); };
  Rng rng(4);
  const int n = 10000;
  double s = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    Vec x = rng.normal_vec(1) * 2.0;
    for (int k = 0; k < 400; ++k) x = langevin_step(sum, x, 0.0, 0.01, 1.0, rng);
    s += x[0];
    sq += x[0] * x[0];
  }
  const double mean = s / n, var = sq / n - mean * mean;
  return {std::abs(mean) < 0.05 && std::abs(var - 0.5) < 0.1, fmt("mean %.4f, variance %.4f over 1e4 samples", mean, var)};
}

Outcome flow_training() {
  Vec target(3);
  target << 0.4, -0.25, 0.1;
  std::vector<TrainingSample> single(256, TrainingSample{small_cond(), target});
  const PolicyCheckpoint a = train_flow_policy(single, sanity_hyper(2000, 6)).checkpoint;
  double worst = 0;
  for (int s = 0; s < 50; ++s) {
    const Vec z = a.normalizer.normalize(sample_flow(a, small_cond(), 1000 + s, 10).action);
    worst = std::max(worst, (z - a.normalizer.normalize(target)).norm());
  }
  std::vector<TrainingSample> two;
  for (int i = 0; i < 128; ++i) {
    two.push_back({small_cond(), Vec::Constant(1, 1.0)});
    two.push_back({small_cond(), Vec::Constant(1, -1.0)});
  }
  const PolicyCheckpoint b = train_flow_policy(two, sanity_hyper(1000, 7)).checkpoint;
  const double mp = b.normalizer.normalize(Vec::Constant(1, 1.0))[0], mm = b.normalizer.normalize(Vec::Constant(1, -1.0))[0];
  int near = 0;
  const int total = 400;
  for (int s = 0; s < total; ++s) {
    const double z = b.normalizer.normalize(sample_flow(b, small_cond(), 5000 + s, 20).action)[0];
    near += std::min(std::abs(z - mp), std::abs(z - mm)) < 0.2;
  }
  const double frac = static_cast<double>(near) / total;
  return {worst < 0.05 && frac >= 0.95,
          fmt("single target worst distance %.4f; two modes %.1f%% within 0.2", worst, 100 * frac)};
}

Outcome step_budget_contract() {
  SamplerConfig cfg;
  cfg.strategy = Strategy::adaptive;
  bool mono = true;
  int prev = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = step_budget(-2.0 + 16.0 * i / 999.0, cfg);
    mono = mono && n >= prev && n >= 1 && n <= cfg.n_max;
    prev = n;
  }
  const int lo = step_budget(3.0, cfg), hi = step_budget(12.0, cfg);
  return {lo == 1 && hi == 5 && mono, fmt("E=3 -> %.0f, E=12 -> %.0f, monotone over 1000 energies: ", lo, hi) +
                                          (mono ? "yes" : "no")};
}

Outcome softmax_simplex() {
  WeightNet wn = WeightNet::initial();
  Rng rng(9);
  wn.params = Mlp::glorot(wn.params.spec, rng);
  for (auto& b : wn.params.biases) b = rng.normal_vec(b.size());
  double worst = 0;
  bool nonneg = true;
  for (int i = 0; i < 10000; ++i) {
    const BimanualAction a{ArmAction(ArmVec(rng.normal_vec(7))), ArmAction(ArmVec(rng.normal_vec(7)))};
    const PoseHistory h = PoseHistory::constant({ArmAction(ArmVec(rng.normal_vec(7))), ArmAction(ArmVec(rng.normal_vec(7)))},
                                                {}, {});
    double sum = 0;
    for (double w : predict_weights(wn, a, h)) {
      nonneg = nonneg && w >= 0.0;
      sum += w;
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return {nonneg && worst < 1e-12, fmt("max |sum - 1| = %.2e over 1e4 inputs", worst) + (nonneg ? "" : ", negative weight")};
}

Outcome ik_round_trip() {
  const ArmGeometry g = default_left_geometry();
  Rng rng(10);
  double worst = 0;
  int optimal = 0;
  for (int i = 0; i < 1000; ++i) {
    const double rmin = g.reach_min() + 1e-6, rmax = g.reach_max() - 1e-6;
    const double r = std::sqrt(rng.uniform(rmin * rmin, rmax * rmax)), phi = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const Eigen::Vector2d target = g.base + r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    const JointConfig seed{rng.uniform(-std::numbers::pi, std::numbers::pi), rng.uniform(-std::numbers::pi, std::numbers::pi)};
    const JointConfig j = inverse_kin(g, target, seed);
    worst = std::max(worst, (forward_kin(g, j) - target).norm());
    bool best = true;
    for (const auto& b : ik_branches(g, target)) best = best && joint_distance(j, seed) <= joint_distance(b, seed);
    optimal += best;
  }
  return {worst < 1e-9 && optimal == 1000, fmt("max FK(IK) error %.2e m; nearest branch in %.0f / 1000", worst, optimal)};
}

// Shared trained pipeline for criteria 5-7.
struct Pipeline {
  json report;
  std::map<std::string, const json*> rows;
  double seconds = 0;
};

json run_pipeline(const fs::path& dir) {
  RunConfig c;
  c.out_dir = dir;
  fs::remove_all(dir);
  cmd_gen_data(c);
  cmd_train(c);
  return cmd_eval(c);
}

const json& suite_of(const Pipeline& p, const std::string& label) { return p.rows.at(label)->at("suite"); }

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_runs");

  run(1, "gradient fidelity", 10, gradient_fidelity);
  run(2, "deterministic limit", 1, deterministic_limit);
  run(3, "gaussian product", 30, gaussian_product);
  run(4, "flow training sanity", 120, flow_training);

  Pipeline p;
  std::string pipeline_error;
  {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      p.report = run_pipeline(work / "run_a");
      for (const auto& row : p.report.at("rows")) p.rows[row.at("label").get<std::string>()] = &row;
    } catch (const std::exception& e) {
      pipeline_error = e.what();
    }
    p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("pipeline (gen-data, train, eval; default config): %.1f s\n", p.seconds);
  }
  const auto need_pipeline = [&](const std::function<Outcome()>& body, double budget) {
    return [&, body, budget]() -> Outcome {
      if (!pipeline_error.empty()) return {false, "pipeline failed: " + pipeline_error};
      Outcome o = body();
      if (p.seconds > budget) {
        o.pass = false;
        o.detail += fmt("; shared pipeline took %.0f s", p.seconds);
      }
      return o;
    };
  };

  run(5, "ablation ordering", 15 * 60, need_pipeline([&]() -> Outcome {
        const double full = suite_of(p, "fixed/full").at("mean_success");
        const double no_coord = suite_of(p, "fixed/compose").at("mean_success");
        const double no_comp = suite_of(p, "fixed/none").at("mean_success");
        return {full > no_coord && no_coord > no_comp,
                fmt("full %.3f, no coordination %.3f, no composition %.3f", full, no_coord, no_comp)};
      }, 15 * 60));

  run(6, "collision claim", 5 * 60, need_pipeline([&]() -> Outcome {
        const TaskSpec task = TaskSpec::defaults(TaskKind::mirrored_reach);
        const auto count = [&](const std::string& label, int& episodes) {
          int hits = 0;
          for (const auto& t : suite_of(p, label).at("tasks")) {
            if (t.at("task") != task.id) continue;
            for (const auto& e : t.at("results")) {
              ++episodes;
              hits += e.at("min_ee_distance").get<double>() < task.d_safe;
            }
          }
          return hits;
        };
        int n_on = 0, n_off = 0;
        const int on = count("fixed/full", n_on), off = count("fixed/compose", n_off);
        return {n_on == 20 && n_off == 20 && on == 0 && off >= 1,
                fmt("below d_safe: coordination on %.0f / %.0f, off %.0f / %.0f", on, n_on, off, n_off)};
      }, 15 * 60));

  run(7, "adaptive step savings", 15 * 60, need_pipeline([&]() -> Outcome {
        const json& fixed = suite_of(p, "fixed/full");
        const json& ad = suite_of(p, "adaptive/full");
        const json& es = suite_of(p, "early-stop/full");
        const double fs_ = fixed.at("mean_success"), as = ad.at("mean_success"), ess = es.at("mean_success");
        const double asteps = ad.at("mean_steps"), esteps = es.at("mean_steps");
        const bool ok = asteps < 5 && esteps < 5 && std::abs(as - fs_) <= 0.05 && std::abs(ess - fs_) <= 0.05;
        return {ok, fmt("success fixed %.3f, adaptive %.3f, early-stop %.3f", fs_, as, ess) +
                        fmt("; mean steps adaptive %.2f, early-stop %.2f", asteps, esteps)};
      }, 15 * 60));

  run(8, "step budget contract", 1, step_budget_contract);
  run(9, "softmax simplex", 1, softmax_simplex);
  run(10, "IK round trip", 1, ik_round_trip);

  run(11, "pipeline determinism", 20 * 60, [&]() -> Outcome {
    if (!pipeline_error.empty()) return {false, "first pipeline failed: " + pipeline_error};
    run_pipeline(work / "run_b");
    const std::string a = read_text(RunPaths{work / "run_a"}.report()), b = read_text(RunPaths{work / "run_b"}.report());
    return {a == b, fmt("two runs with seed 0: reports %.0f bytes each, ", static_cast<double>(a.size())) +
                        (a == b ? "byte-identical" : "differ") + fmt(" (first run %.0f s included)", p.seconds)};
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
