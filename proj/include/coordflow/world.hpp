// Synthetic planar bimanual desk: scripted tasks, demonstrations, closed-loop
// rollouts and scoring.
#pragma once

#include "coordflow/sampler.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace coordflow {

/// Planar pose (x, y, yaw, gripper); maps onto the 7-dim action with z and
/// the two unused orientation slots at 0.
using Pose4 = Eigen::Vector4d;
ArmAction pose_action(const Pose4& p);
Pose4 action_pose(const ArmAction& a);

enum class Skill : int { move = 0, grip = 1, hold = 2 };
inline constexpr int kNumSkills = 3;

struct Segment {
  Pose4 goal;
  int duration = 1;  // control steps
};

/// Minimum-jerk profile 10 s^3 - 15 s^4 + 6 s^5.
double min_jerk(double s);

/// Piecewise min-jerk script. Past the last segment the arm holds its goal.
struct ArmScript {
  Pose4 start = Pose4::Zero();
  std::vector<Segment> segments;

  int length() const;
  struct Cursor {
    int segment;  // index into segments, or -1 when done
    int k;        // steps already spent in the segment
  };
  Cursor cursor(int step) const;
  const Segment& segment_at(int step) const;
  Pose4 segment_origin(int index) const;
  Skill skill_at(int step) const;
  /// Scripted pose after `step` when following the schedule exactly.
  Pose4 nominal(int step) const;
};

/// Feedback form of the min-jerk script: from pose p at `step`, the pose the
/// script reaches one step later if the remaining profile is rescaled to p.
Pose4 scripted_next(const ArmScript& script, int step, const Pose4& p);

/// Per-arm conditioning: observation = (goal x, y, yaw, gripper, phase,
/// 1/duration), proprio = the 7-dim current action, instruction = skill one-hot.
Conditioning arm_conditioning(const ArmScript& script, int step, const Pose4& current);
inline constexpr int kArmCondDim = 6 + kArmDim + kNumSkills + 1;

enum class TaskKind { mirrored_reach, sync_lift, handover };
std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);
inline constexpr int kNumTaskKinds = 3;

struct TaskSpec {
  std::string id;
  TaskKind kind = TaskKind::mirrored_reach;
  ArmGeometry left_geom = default_left_geometry();
  ArmGeometry right_geom = default_right_geometry();
  int episode_length = 40;
  double demo_noise = 0.005;    // pose jitter in demos (m)
  double d_safe = 0.05;         // collision distance for scoring (m)
  double coord_d_safe = 0.08;   // clearance handed to the coordination energy (m)
  double goal_tol = 0.02;       // m
  double grip_tol = 0.25;
  int final_window = 5;         // steps scored at the end
  int sync_window = 2;          // allowed lift-start offset (steps)
  double band_low = 0.08;       // handover distance band (m)
  double band_high = 0.14;
  double max_step = 0.05;       // executed displacement clamp (m)
  double peak_speed = 0.045;    // scripted peak speed (m/step)

  void validate() const;
  static TaskSpec defaults(TaskKind kind);
};

/// One randomized episode of a task: both scripts plus the scripted bump
/// bimanual demos add to the crossing segment.
struct TaskInstance {
  ArmScript left, right;
  int detour_segment = -1;
  double detour = 0.0;       // left +y, right -y, scaled by sin(pi s)
  int event_begin = -1;      // lift start or handover dwell start
  int event_end = -1;        // handover dwell end (exclusive)
  double event_height = 0.0; // lift: start height
  std::uint64_t seed = 0;
};
TaskInstance instantiate(const TaskSpec& task, std::uint64_t seed);

struct ArmDemoStep {
  Conditioning cond;
  ArmAction action;
};
struct ArmDemonstration {
  std::string arm;  // "left" or "right"
  std::uint64_t seed = 0;
  ArmAction initial;
  std::vector<ArmDemoStep> steps;
};

struct DemoStep {
  Conditioning left, right;
  BimanualAction action;
};
struct Demonstration {
  std::string task;
  std::uint64_t seed = 0;
  BimanualAction initial;
  std::vector<DemoStep> steps;
};

struct DemoRegion {
  double x_min = -0.3, x_max = 0.3;
  double y_min = 0.15, y_max = 0.55;
};

/// Random single-arm min-jerk scripts (moves, gripper dwells, holds) with
/// seeded jitter of the visited poses; labels follow the script's feedback form.
std::vector<ArmDemonstration> gen_unimanual_demos(const ArmGeometry& geom, const std::string& arm, int n,
                                                  std::uint64_t seed, double noise = 0.005,
                                                  const DemoRegion& region = {});
ArmDemonstration scripted_arm_demo(const ArmScript& script, int length, std::uint64_t seed, double noise,
                                   const std::string& arm);

std::vector<Demonstration> gen_bimanual_demos(const TaskSpec& task, int n, std::uint64_t seed);
Demonstration scripted_bimanual_demo(const TaskSpec& task, const TaskInstance& inst, double noise,
                                     std::uint64_t seed);

/// Joint conditioning for a from-scratch bimanual policy.
Conditioning joint_conditioning(const Conditioning& left, const Conditioning& right, TaskKind kind);

/// Minimum over tau in [0, 1] of |r0 + tau (r1 - r0)|.
double segment_min_norm(const Eigen::Vector3d& r0, const Eigen::Vector3d& r1);

enum class FailureReason { collision, timeout, goal_miss, divergence };
std::string to_string(FailureReason r);

struct StepObservation {
  const TaskSpec* task;
  const TaskInstance* instance;
  int step;
  BimanualAction current;
  const PoseHistory* history;
  Conditioning left, right;
  std::uint64_t seed;
};

struct StepDecision {
  BimanualAction action;
  EnergyBreakdown energy;
  int steps_used = 0;
  Termination reason = Termination::fixed;
  double initial_energy = 0.0;
  bool ik_flagged = false;
};

class BimanualPolicy {
 public:
  virtual ~BimanualPolicy() = default;
  virtual StepDecision act(const StepObservation& obs) const = 0;
};

/// Replays a demonstration's actions.
class ReplayPolicy final : public BimanualPolicy {
 public:
  explicit ReplayPolicy(Demonstration demo) : demo_(std::move(demo)) {}
  StepDecision act(const StepObservation& obs) const override;

 private:
  Demonstration demo_;
};

/// Commands the current pose every step.
class ZeroPolicy final : public BimanualPolicy {
 public:
  StepDecision act(const StepObservation& obs) const override;
};

/// Which parts of the model are active (a row of the ablation table).
struct Ablation {
  bool compose = true;
  bool temporal = true;
  bool spatial = true;

  std::string label() const;
};

/// Learned sampler: composed unimanual checkpoints, or a single joint
/// checkpoint when composition is ablated.
class SampledPolicy final : public BimanualPolicy {
 public:
  SampledPolicy(const PolicyCheckpoint* left, const PolicyCheckpoint* right, const PolicyCheckpoint* joint,
                const WeightNet* weights, SamplerConfig sampler, Ablation ablation);
  StepDecision act(const StepObservation& obs) const override;

 private:
  const PolicyCheckpoint* left_;
  const PolicyCheckpoint* right_;
  const PolicyCheckpoint* joint_;
  const WeightNet* weights_;
  SamplerConfig sampler_;
  Ablation ablation_;
};

CoordConfig task_coord_config(const TaskSpec& task, const Ablation& ablation);

struct StepRecord {
  BimanualAction executed;
  EnergyBreakdown energy;
  int steps_used = 0;
  Termination reason = Termination::fixed;
  double initial_energy = 0.0;
  double ee_distance = 0.0;  // swept minimum over the step (m)
  bool ik_flagged = false;
};

struct EpisodeResult {
  std::string task;
  int episode = 0;
  std::uint64_t seed = 0;
  bool success = false;
  std::optional<FailureReason> failure;
  double min_ee_distance = 0.0;
  double min_joint_distance = 0.0;
  double mean_steps = 0.0;
  int max_steps = 0;
  std::vector<StepRecord> steps;
};

/// Clamped, reachability-projected execution of a commanded action.
BimanualAction execute_action(const TaskSpec& task, const BimanualAction& current, const BimanualAction& command);

EpisodeResult rollout(const TaskSpec& task, const BimanualPolicy& policy, std::uint64_t seed, int episode = 0);

/// Success predicates on a finished episode; returns the failure or nothing.
std::optional<FailureReason> score_episode(const TaskSpec& task, const TaskInstance& inst,
                                           const std::vector<BimanualAction>& executed, double min_ee_distance);

struct TaskReport {
  std::string task;
  int episodes = 0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double mean_steps = 0.0;
  std::vector<EpisodeResult> results;
};

struct SuiteReport {
  std::vector<TaskReport> tasks;
  double mean_success = 0.0;
  double mean_collision = 0.0;
  double mean_steps = 0.0;
};

/// Episode seeds: split_seed(split_seed(master, task index), episode).
std::uint64_t episode_seed(std::uint64_t master, int task_index, int episode);

SuiteReport evaluate_suite(const std::vector<TaskSpec>& tasks, const BimanualPolicy& policy, int episodes_per_task,
                           std::uint64_t master_seed, int threads = 1);
/// Recomputes the aggregate fields from the per-episode results.
void aggregate(SuiteReport& report);

std::vector<TaskSpec> default_suite();

}  // namespace coordflow
