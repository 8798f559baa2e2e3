#include "coordflow/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

namespace coordflow {

ArmAction pose_action(const Pose4& p) { return ArmAction::planar(p[0], p[1], p[2], p[3]); }

Pose4 action_pose(const ArmAction& a) { return {a.v[0], a.v[1], a.v[3], a.v[6]}; }

double min_jerk(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

int ArmScript::length() const {
  int n = 0;
  for (const auto& s : segments) n += s.duration;
  return n;
}

ArmScript::Cursor ArmScript::cursor(int step) const {
  int begin = 0;
  for (int i = 0; i < static_cast<int>(segments.size()); ++i) {
    if (step < begin + segments[i].duration) return {i, step - begin};
    begin += segments[i].duration;
  }
  return {-1, 0};
}

const Segment& ArmScript::segment_at(int step) const {
  if (segments.empty()) throw std::logic_error("ArmScript: no segments");
  const Cursor c = cursor(step);
  return c.segment < 0 ? segments.back() : segments[c.segment];
}

Pose4 ArmScript::segment_origin(int index) const { return index == 0 ? start : segments[index - 1].goal; }

Skill ArmScript::skill_at(int step) const {
  const Cursor c = cursor(step);
  if (c.segment < 0) return Skill::hold;
  const Pose4 d = segments[c.segment].goal - segment_origin(c.segment);
  if (d.head<2>().norm() > 1e-9) return Skill::move;
  if (d.tail<2>().norm() > 1e-9) return Skill::grip;
  return Skill::hold;
}

Pose4 ArmScript::nominal(int step) const {
  const Cursor c = cursor(step);
  if (c.segment < 0) return segments.empty() ? start : segments.back().goal;
  const Pose4 o = segment_origin(c.segment);
  const Segment& s = segments[c.segment];
  return o + (s.goal - o) * min_jerk(static_cast<double>(c.k) / s.duration);
}

Pose4 scripted_next(const ArmScript& script, int step, const Pose4& p) {
  const ArmScript::Cursor c = script.cursor(step);
  if (c.segment < 0) return script.segments.empty() ? script.start : script.segments.back().goal;
  const Segment& seg = script.segments[c.segment];
  const double s0 = static_cast<double>(c.k) / seg.duration;
  const double s1 = static_cast<double>(c.k + 1) / seg.duration;
  const double ratio = (1.0 - min_jerk(s1)) / (1.0 - min_jerk(s0));
  return seg.goal + (p - seg.goal) * ratio;
}

Conditioning arm_conditioning(const ArmScript& script, int step, const Pose4& current) {
  const ArmScript::Cursor c = script.cursor(step);
  const Segment& seg = script.segment_at(step);
  const double phase = c.segment < 0 ? 1.0 : static_cast<double>(c.k) / seg.duration;
  Conditioning cond;
  cond.observation.resize(6);
  cond.observation << seg.goal, phase, 1.0 / seg.duration;
  cond.proprio = pose_action(current).v;
  cond.instruction = Vec::Zero(kNumSkills);
  cond.instruction[static_cast<int>(script.skill_at(step))] = 1.0;
  return cond;
}

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::mirrored_reach: return "mirrored-reach";
    case TaskKind::sync_lift: return "sync-lift";
    case TaskKind::handover: return "handover";
  }
  return "?";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "mirrored-reach") return TaskKind::mirrored_reach;
  if (s == "sync-lift") return TaskKind::sync_lift;
  if (s == "handover") return TaskKind::handover;
  throw std::invalid_argument("unknown task kind '" + s + "'");
}

void TaskSpec::validate() const {
  left_geom.validate();
  right_geom.validate();
  if (episode_length < 4) throw std::invalid_argument("task " + id + ": episode_length must be >= 4");
  if (!(d_safe > 0) || !(coord_d_safe > 0)) throw std::invalid_argument("task " + id + ": d_safe must be positive");
  if (!(goal_tol > 0) || !(grip_tol > 0)) throw std::invalid_argument("task " + id + ": tolerances must be positive");
  if (final_window < 1 || final_window > episode_length)
    throw std::invalid_argument("task " + id + ": final_window out of range");
  if (sync_window < 0) throw std::invalid_argument("task " + id + ": sync_window must be >= 0");
  if (!(band_low < band_high)) throw std::invalid_argument("task " + id + ": band_low must be < band_high");
  if (!(max_step > 0) || !(peak_speed > 0)) throw std::invalid_argument("task " + id + ": speeds must be positive");
  if (!(demo_noise >= 0)) throw std::invalid_argument("task " + id + ": demo_noise must be >= 0");
}

TaskSpec TaskSpec::defaults(TaskKind kind) {
  TaskSpec t;
  t.kind = kind;
  t.id = to_string(kind);
  return t;
}

std::vector<TaskSpec> default_suite() {
  return {TaskSpec::defaults(TaskKind::mirrored_reach), TaskSpec::defaults(TaskKind::sync_lift),
          TaskSpec::defaults(TaskKind::handover)};
}

namespace {

int move_duration(double distance, double peak_speed) {
  // Peak min-jerk speed is 1.875 D / T.
  return std::max(4, static_cast<int>(std::ceil(1.875 * distance / peak_speed)));
}

Pose4 planar_pose(double x, double y, double grip) { return {x, y, 0.0, grip}; }

Pose4 with_grip(Pose4 p, double grip) {
  p[3] = grip;
  return p;
}

bool reachable(const ArmGeometry& g, const Eigen::Vector2d& p, double margin) {
  const double r = (p - g.base).norm();
  return r <= g.reach_max() - margin && r >= g.reach_min() + margin;
}

void check_script(const ArmScript& s, const ArmGeometry& g, const std::string& who) {
  if (!reachable(g, s.start.head<2>(), 0.0)) throw std::invalid_argument(who + ": start pose unreachable");
  for (const auto& seg : s.segments)
    if (!reachable(g, seg.goal.head<2>(), 0.0)) throw std::invalid_argument(who + ": goal unreachable");
}

// Detour offset of the scripted bimanual demo at `step` (left arm sign).
double detour_at(const TaskInstance& inst, const ArmScript& s, int step) {
  if (inst.detour_segment < 0) return 0.0;
  const ArmScript::Cursor c = s.cursor(step);
  if (c.segment != inst.detour_segment) return 0.0;
  const double phase = static_cast<double>(c.k) / s.segments[c.segment].duration;
  return inst.detour * std::sin(std::numbers::pi * phase);
}

}  // namespace

TaskInstance instantiate(const TaskSpec& task, std::uint64_t seed) {
  task.validate();
  Rng rng(seed);
  TaskInstance inst;
  inst.seed = seed;
  auto& L = inst.left;
  auto& R = inst.right;
  const double v = task.peak_speed;
  switch (task.kind) {
    case TaskKind::mirrored_reach: {
      // Paths form an X whose relative line passes within q of contact.
      const double c = rng.uniform(0.30, 0.38), e = rng.uniform(0.0, 0.06);
      const double x0 = rng.uniform(0.15, 0.20), q = rng.uniform(0.005, 0.03);
      L.start = planar_pose(-x0, c + e + q / 2, 0.0);
      R.start = planar_pose(x0, c + e - q / 2, 0.0);
      const Pose4 gl = planar_pose(x0, c - e + q / 2, 0.0);
      const Pose4 gr = planar_pose(-x0, c - e - q / 2, 0.0);
      const int T = move_duration((gl - L.start).head<2>().norm(), v);
      L.segments = {{L.start, 2}, {gl, T}};
      R.segments = {{R.start, 2}, {gr, T}};
      inst.detour_segment = 1;
      inst.detour = 0.05;
      inst.event_begin = 2;
      inst.event_end = 2 + T;
      break;
    }
    case TaskKind::sync_lift: {
      const double cx = rng.uniform(-0.05, 0.05), cy = rng.uniform(0.22, 0.30), w = rng.uniform(0.20, 0.28);
      const Pose4 hl = planar_pose(cx - w / 2, cy, 0.0), hr = planar_pose(cx + w / 2, cy, 0.0);
      L.start = planar_pose(hl[0] - rng.uniform(0.05, 0.15), cy + rng.uniform(0.10, 0.20), 0.0);
      R.start = planar_pose(hr[0] + rng.uniform(0.05, 0.15), cy + rng.uniform(0.10, 0.20), 0.0);
      const int t_app = std::max(move_duration((hl - L.start).head<2>().norm(), v),
                                 move_duration((hr - R.start).head<2>().norm(), v));
      const double lift = 0.15;
      const int t_lift = move_duration(lift, v);
      L.segments = {{L.start, 2}, {hl, t_app}, {with_grip(hl, 1.0), 3},
                    {planar_pose(hl[0], cy + lift, 1.0), t_lift}};
      R.segments = {{R.start, 2}, {hr, t_app}, {with_grip(hr, 1.0), 3},
                    {planar_pose(hr[0], cy + lift, 1.0), t_lift}};
      inst.event_begin = 2 + t_app + 3;
      inst.event_height = cy;
      break;
    }
    case TaskKind::handover: {
      const double cx = rng.uniform(-0.05, 0.05), cy = rng.uniform(0.30, 0.38), gap = 0.11;
      L.start = planar_pose(cx - rng.uniform(0.15, 0.25), cy + rng.uniform(-0.10, 0.05), 1.0);
      R.start = planar_pose(cx + rng.uniform(0.15, 0.25), cy + rng.uniform(-0.10, 0.05), 0.0);
      const Pose4 ml = planar_pose(cx - gap / 2, cy, 1.0), mr = planar_pose(cx + gap / 2, cy, 0.0);
      const int t1 = std::max(move_duration((ml - L.start).head<2>().norm(), v),
                              move_duration((mr - R.start).head<2>().norm(), v));
      const Pose4 gl = planar_pose(cx - 0.20, cy - 0.12, 0.0), gr = planar_pose(cx + 0.20, cy + 0.10, 1.0);
      const int t2 = std::max(move_duration((gl - ml).head<2>().norm(), v), move_duration((gr - mr).head<2>().norm(), v));
      L.segments = {{L.start, 2}, {ml, t1}, {with_grip(ml, 0.0), 4}, {gl, t2}};
      R.segments = {{R.start, 2}, {mr, t1}, {with_grip(mr, 1.0), 4}, {gr, t2}};
      inst.event_begin = 2 + t1;
      inst.event_end = inst.event_begin + 4;
      break;
    }
  }
  check_script(L, task.left_geom, task.id + " left");
  check_script(R, task.right_geom, task.id + " right");
  if (std::max(L.length(), R.length()) + task.final_window > task.episode_length)
    throw std::invalid_argument("task " + task.id + ": script does not fit the episode length");
  return inst;
}

ArmDemonstration scripted_arm_demo(const ArmScript& script, int length, std::uint64_t seed, double noise,
                                   const std::string& arm) {
  Rng rng(seed);
  ArmDemonstration d;
  d.arm = arm;
  d.seed = seed;
  d.initial = pose_action(script.start);
  Pose4 p = script.start;
  for (int step = 0; step < length; ++step) {
    Pose4 seen = p;
    if (noise > 0) {
      seen[0] += noise * rng.normal();
      seen[1] += noise * rng.normal();
    }
    const Pose4 next = scripted_next(script, step, seen);
    d.steps.push_back({arm_conditioning(script, step, seen), pose_action(next)});
    p = next;
  }
  return d;
}

std::vector<ArmDemonstration> gen_unimanual_demos(const ArmGeometry& geom, const std::string& arm, int n,
                                                  std::uint64_t seed, double noise, const DemoRegion& region) {
  if (n < 1) throw std::invalid_argument("gen_unimanual_demos: n must be >= 1");
  geom.validate();
  std::vector<ArmDemonstration> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t s = split_seed(seed, static_cast<std::uint64_t>(i));
    Rng rng(split_seed(s, 1));
    auto sample_xy = [&] {
      for (int tries = 0; tries < 1000; ++tries) {
        const Eigen::Vector2d p(rng.uniform(region.x_min, region.x_max), rng.uniform(region.y_min, region.y_max));
        if (reachable(geom, p, 0.02)) return p;
      }
      throw std::invalid_argument("gen_unimanual_demos: region has no reachable points");
    };
    ArmScript script;
    const Eigen::Vector2d p0 = sample_xy();
    double grip = rng.uniform() < 0.5 ? 0.0 : 1.0;
    script.start = planar_pose(p0.x(), p0.y(), grip);
    const int lead = static_cast<int>(rng.uniform_int(0, 3));
    if (lead > 0) script.segments.push_back({script.start, lead});
    const int n_seg = static_cast<int>(rng.uniform_int(1, 3));
    Pose4 cur = script.start;
    for (int k = 0; k < n_seg; ++k) {
      if (rng.uniform() < 0.3) {
        grip = 1.0 - grip;
        cur = with_grip(cur, grip);
        script.segments.push_back({cur, static_cast<int>(rng.uniform_int(3, 4))});
      } else {
        const Eigen::Vector2d g = sample_xy();
        const Pose4 next = planar_pose(g.x(), g.y(), grip);
        script.segments.push_back({next, move_duration((next - cur).head<2>().norm(), 0.045)});
        cur = next;
      }
    }
    const int length = script.length() + static_cast<int>(rng.uniform_int(3, 8));
    out.push_back(scripted_arm_demo(script, length, split_seed(s, 2), noise, arm));
  }
  return out;
}

Demonstration scripted_bimanual_demo(const TaskSpec& task, const TaskInstance& inst, double noise,
                                     std::uint64_t seed) {
  Rng rng(seed);
  Demonstration d;
  d.task = task.id;
  d.seed = inst.seed;
  d.initial = {pose_action(inst.left.start), pose_action(inst.right.start)};
  Pose4 pl = inst.left.start, pr = inst.right.start;
  for (int step = 0; step < task.episode_length; ++step) {
    Pose4 sl = pl, sr = pr;
    if (noise > 0) {
      sl[0] += noise * rng.normal();
      sl[1] += noise * rng.normal();
      sr[0] += noise * rng.normal();
      sr[1] += noise * rng.normal();
    }
    // Follow the script around the detour: strip the bump, step, re-add it.
    const double b0 = detour_at(inst, inst.left, step), b1 = detour_at(inst, inst.left, step + 1);
    Pose4 base_l = sl, base_r = sr;
    base_l[1] -= b0;
    base_r[1] += b0;
    Pose4 nl = scripted_next(inst.left, step, base_l), nr = scripted_next(inst.right, step, base_r);
    nl[1] += b1;
    nr[1] -= b1;
    d.steps.push_back({arm_conditioning(inst.left, step, sl), arm_conditioning(inst.right, step, sr),
                       {pose_action(nl), pose_action(nr)}});
    pl = nl;
    pr = nr;
  }
  return d;
}

std::vector<Demonstration> gen_bimanual_demos(const TaskSpec& task, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_bimanual_demos: n must be >= 1");
  std::vector<Demonstration> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t s = split_seed(seed, static_cast<std::uint64_t>(i));
    const TaskInstance inst = instantiate(task, split_seed(s, 1));
    out.push_back(scripted_bimanual_demo(task, inst, task.demo_noise, split_seed(s, 2)));
  }
  return out;
}

Conditioning joint_conditioning(const Conditioning& left, const Conditioning& right, TaskKind kind) {
  Conditioning c;
  c.observation.resize(left.observation.size() + right.observation.size() + kNumTaskKinds);
  Vec task = Vec::Zero(kNumTaskKinds);
  task[static_cast<int>(kind)] = 1.0;
  c.observation << left.observation, right.observation, task;
  c.proprio.resize(left.proprio.size() + right.proprio.size());
  c.proprio << left.proprio, right.proprio;
  c.instruction.resize(left.instruction.size() + right.instruction.size());
  c.instruction << left.instruction, right.instruction;
  return c;
}

double segment_min_norm(const Eigen::Vector3d& r0, const Eigen::Vector3d& r1) {
  const Eigen::Vector3d d = r1 - r0;
  const double dd = d.squaredNorm();
  if (dd == 0.0) return r0.norm();
  const double tau = std::clamp(-r0.dot(d) / dd, 0.0, 1.0);
  return (r0 + tau * d).norm();
}

std::string to_string(FailureReason r) {
  switch (r) {
    case FailureReason::collision: return "collision";
    case FailureReason::timeout: return "timeout";
    case FailureReason::goal_miss: return "goal_miss";
    case FailureReason::divergence: return "divergence";
  }
  return "?";
}

StepDecision ReplayPolicy::act(const StepObservation& obs) const {
  StepDecision d;
  const auto& steps = demo_.steps;
  d.action = steps.empty() ? obs.current : steps[std::min<std::size_t>(obs.step, steps.size() - 1)].action;
  return d;
}

StepDecision ZeroPolicy::act(const StepObservation& obs) const {
  StepDecision d;
  d.action = obs.current;
  return d;
}

std::string Ablation::label() const {
  if (compose && temporal && spatial) return "full";
  if (!compose && !temporal && !spatial) return "none";
  std::string s;
  for (auto [on, name] : {std::pair{compose, "compose"}, {temporal, "temporal"}, {spatial, "spatial"}}) {
    if (!on) continue;
    if (!s.empty()) s += "+";
    s += name;
  }
  return s;
}

CoordConfig task_coord_config(const TaskSpec& task, const Ablation& ablation) {
  CoordConfig c;
  c.d_safe = task.coord_d_safe;
  c.temporal = ablation.temporal;
  c.spatial = ablation.spatial;
  c.left_geom = task.left_geom;
  c.right_geom = task.right_geom;
  return c;
}

SampledPolicy::SampledPolicy(const PolicyCheckpoint* left, const PolicyCheckpoint* right,
                             const PolicyCheckpoint* joint, const WeightNet* weights, SamplerConfig sampler,
                             Ablation ablation)
    : left_(left), right_(right), joint_(joint), weights_(weights), sampler_(sampler), ablation_(ablation) {
  if (ablation_.compose && (!left_ || !right_))
    throw std::invalid_argument("SampledPolicy: composition needs both unimanual checkpoints");
  if (!ablation_.compose && !joint_) throw std::invalid_argument("SampledPolicy: no joint checkpoint");
  sampler_.validate();
}

StepDecision SampledPolicy::act(const StepObservation& obs) const {
  SamplerConfig sc = sampler_;
  sc.seed = obs.seed;
  std::unique_ptr<BimanualField> field;
  if (ablation_.compose)
    field = std::make_unique<ComposedField>(*left_, *right_, obs.left, obs.right, sc.guidance);
  else
    field = std::make_unique<JointField>(*joint_, joint_conditioning(obs.left, obs.right, obs.task->kind),
                                         sc.guidance.left);
  SamplerContext ctx;
  ctx.field = field.get();
  ctx.history = obs.history;
  ctx.weights = weights_;
  ctx.coord = task_coord_config(*obs.task, ablation_);
  ctx.coordination = ablation_.temporal || ablation_.spatial;
  const DenoiseResult r = denoise(ctx, sc);
  StepDecision d;
  d.action = r.action(*field);
  d.energy = r.trace.final_energy;
  d.steps_used = r.trace.steps_used;
  d.reason = r.trace.reason;
  d.initial_energy = r.trace.initial_energy;
  d.ik_flagged = r.trace.ik_flagged;
  return d;
}

BimanualAction execute_action(const TaskSpec& task, const BimanualAction& current, const BimanualAction& command) {
  auto one = [&](const ArmAction& cur, const ArmAction& cmd, const ArmGeometry& g) {
    Eigen::Vector2d d = cmd.xy() - cur.xy();
    const double n = d.norm();
    if (n > task.max_step) d *= task.max_step / n;
    Eigen::Vector2d xy = cur.xy() + d;
    if (!reachable(g, xy, 0.0)) xy = project_reachable(g, xy);
    return ArmAction::planar(xy.x(), xy.y(), cmd.yaw(), cmd.gripper());
  };
  return {one(current.left, command.left, task.left_geom), one(current.right, command.right, task.right_geom)};
}

std::optional<FailureReason> score_episode(const TaskSpec& task, const TaskInstance& inst,
                                           const std::vector<BimanualAction>& executed, double min_ee_distance) {
  if (min_ee_distance < task.d_safe) return FailureReason::collision;
  const int n = static_cast<int>(executed.size());
  if (n < task.final_window) return FailureReason::goal_miss;
  const Pose4 gl = inst.left.segments.back().goal, gr = inst.right.segments.back().goal;
  for (int k = n - task.final_window; k < n; ++k) {
    const Pose4 pl = action_pose(executed[k].left), pr = action_pose(executed[k].right);
    if ((pl - gl).head<2>().norm() > task.goal_tol || (pr - gr).head<2>().norm() > task.goal_tol)
      return FailureReason::goal_miss;
    if (std::abs(pl[3] - gl[3]) > task.grip_tol || std::abs(pr[3] - gr[3]) > task.grip_tol)
      return FailureReason::goal_miss;
  }
  if (task.kind == TaskKind::sync_lift) {
    auto lift_start = [&](bool left) {
      for (int k = 0; k < n; ++k) {
        const auto& a = left ? executed[k].left : executed[k].right;
        if (a.v[1] > inst.event_height + 0.02) return k;
      }
      return n;
    };
    if (std::abs(lift_start(true) - lift_start(false)) > task.sync_window) return FailureReason::timeout;
  }
  if (task.kind == TaskKind::handover) {
    for (int k = std::max(0, inst.event_begin - 1); k < std::min(n, inst.event_end); ++k) {
      const double d = (executed[k].left.xy() - executed[k].right.xy()).norm();
      if (d < task.band_low || d > task.band_high) return FailureReason::timeout;
    }
  }
  return std::nullopt;
}

EpisodeResult rollout(const TaskSpec& task, const BimanualPolicy& policy, std::uint64_t seed, int episode) {
  const TaskInstance inst = instantiate(task, seed);
  EpisodeResult res;
  res.task = task.id;
  res.episode = episode;
  res.seed = seed;
  BimanualAction current{pose_action(inst.left.start), pose_action(inst.right.start)};
  const JointConfig elbow_seed{0.0, 1.0};
  JointConfig jl = inverse_kin_projected(task.left_geom, current.left.xy(), elbow_seed).joints;
  JointConfig jr = inverse_kin_projected(task.right_geom, current.right.xy(), elbow_seed).joints;
  PoseHistory history = PoseHistory::constant(current, jl, jr);
  res.min_ee_distance = (pos_extract(current.left) - pos_extract(current.right)).norm();
  res.min_joint_distance = joint_distance(jl, jr);
  std::vector<BimanualAction> executed;
  double steps_sum = 0.0;

  for (int step = 0; step < task.episode_length; ++step) {
    StepObservation obs{&task,
                        &inst,
                        step,
                        current,
                        &history,
                        arm_conditioning(inst.left, step, action_pose(current.left)),
                        arm_conditioning(inst.right, step, action_pose(current.right)),
                        split_seed(seed, static_cast<std::uint64_t>(step) + 1)};
    StepDecision dec;
    try {
      dec = policy.act(obs);
    } catch (const NumericError&) {
      res.failure = FailureReason::divergence;
      break;
    }
    if (!dec.action.all_finite()) {
      res.failure = FailureReason::divergence;
      break;
    }
    const BimanualAction next = execute_action(task, current, dec.action);
    const double dist = segment_min_norm(pos_extract(current.left) - pos_extract(current.right),
                                         pos_extract(next.left) - pos_extract(next.right));
    jl = inverse_kin_projected(task.left_geom, next.left.xy(), history.joints_left).joints;
    jr = inverse_kin_projected(task.right_geom, next.right.xy(), history.joints_right).joints;
    res.min_ee_distance = std::min(res.min_ee_distance, dist);
    res.min_joint_distance = std::min(res.min_joint_distance, joint_distance(jl, jr));
    history.push(next, jl, jr);
    res.steps.push_back({next, dec.energy, dec.steps_used, dec.reason, dec.initial_energy, dist, dec.ik_flagged});
    res.max_steps = std::max(res.max_steps, dec.steps_used);
    steps_sum += dec.steps_used;
    executed.push_back(next);
    current = next;
  }
  if (!res.steps.empty()) res.mean_steps = steps_sum / static_cast<double>(res.steps.size());
  if (!res.failure) res.failure = score_episode(task, inst, executed, res.min_ee_distance);
  res.success = !res.failure.has_value();
  return res;
}

std::uint64_t episode_seed(std::uint64_t master, int task_index, int episode) {
  return split_seed(split_seed(master, static_cast<std::uint64_t>(task_index)), static_cast<std::uint64_t>(episode));
}

void aggregate(SuiteReport& report) {
  report.mean_success = report.mean_collision = report.mean_steps = 0.0;
  for (auto& t : report.tasks) {
    t.episodes = static_cast<int>(t.results.size());
    double succ = 0, coll = 0, steps = 0;
    for (const auto& r : t.results) {
      succ += r.success ? 1.0 : 0.0;
      coll += r.failure == FailureReason::collision ? 1.0 : 0.0;
      steps += r.mean_steps;
    }
    const double n = std::max(1, t.episodes);
    t.success_rate = succ / n;
    t.collision_rate = coll / n;
    t.mean_steps = steps / n;
    report.mean_success += t.success_rate;
    report.mean_collision += t.collision_rate;
    report.mean_steps += t.mean_steps;
  }
  if (!report.tasks.empty()) {
    const double k = static_cast<double>(report.tasks.size());
    report.mean_success /= k;
    report.mean_collision /= k;
    report.mean_steps /= k;
  }
}

SuiteReport evaluate_suite(const std::vector<TaskSpec>& tasks, const BimanualPolicy& policy, int episodes_per_task,
                           std::uint64_t master_seed, int threads) {
  if (episodes_per_task < 1) throw std::invalid_argument("evaluate_suite: episodes_per_task must be >= 1");
  SuiteReport report;
  report.tasks.resize(tasks.size());
  struct Job {
    std::size_t task;
    int episode;
  };
  std::vector<Job> jobs;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    report.tasks[t].task = tasks[t].id;
    report.tasks[t].results.resize(episodes_per_task);
    for (int e = 0; e < episodes_per_task; ++e) jobs.push_back({t, e});
  }
  auto run = [&](const Job& j) {
    report.tasks[j.task].results[j.episode] =
        rollout(tasks[j.task], policy, episode_seed(master_seed, static_cast<int>(j.task), j.episode), j.episode);
  };
  threads = std::max(1, threads);
  if (threads == 1) {
    for (const auto& j : jobs) run(j);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < jobs.size(); i += threads) run(jobs[i]);
      });
    for (auto& th : pool) th.join();
  }
  aggregate(report);
  return report;
}

}  // namespace coordflow
