// Temporal-spatial coordination energies over a bimanual action, their
// analytic gradients, and the softmax weight predictor.
#pragma once

#include "coordflow/composition.hpp"
#include "coordflow/kinematics.hpp"

#include <array>

namespace coordflow {

/// Last executed actions, newest first, plus each arm's last joint config
/// (the IK seed). A fresh history repeats the initial pose in every slot.
struct PoseHistory {
  std::array<BimanualAction, 3> past;
  JointConfig joints_left;
  JointConfig joints_right;

  static PoseHistory constant(const BimanualAction& a, const JointConfig& jl, const JointConfig& jr);
  void push(const BimanualAction& executed, const JointConfig& jl, const JointConfig& jr);
  const BimanualAction& prev(int k = 1) const { return past[k - 1]; }
};

struct CoordConfig {
  double d_safe = 0.001;        // end-effector clearance, m
  double d_safe_joint = 0.001;  // joint-space clearance, rad
  double sync_gate = 1e-6;      // speed below which the sync direction term fades out
  bool temporal = true;         // vel, accel, jerk, sync
  bool spatial = true;          // ee, joint
  bool position_only = false;   // temporal terms on the position slots only
  ArmGeometry left_geom = default_left_geometry();
  ArmGeometry right_geom = default_right_geometry();

  bool any_enabled() const { return temporal || spatial; }
};

enum class Term : int { vel = 0, accel, jerk, sync, ee, joint };
inline constexpr int kNumTerms = 6;
const char* term_name(Term t);

using TermArray = std::array<double, kNumTerms>;

struct EnergyBreakdown {
  double e_vel = 0, e_accel = 0, e_jerk = 0, e_sync = 0, e_ee = 0, e_joint = 0;
  TermArray weights{};
  double e_coord = 0;
  double e_comp = 0;
  double e_total = 0;
  bool ik_flagged = false;  // joint term evaluated at a projected or singular IK solution

  TermArray terms() const { return {e_vel, e_accel, e_jerk, e_sync, e_ee, e_joint}; }
  void set_terms(const TermArray& t);
};

/// Gradient with respect to (a^L, a^R).
struct ActionGrad {
  ArmVec left = ArmVec::Zero();
  ArmVec right = ArmVec::Zero();

  ActionGrad& operator+=(const ActionGrad& o) {
    left += o.left;
    right += o.right;
    return *this;
  }
  ActionGrad operator*(double s) const { return {left * s, right * s}; }
  double squared_norm() const { return left.squaredNorm() + right.squaredNorm(); }
};

BimanualAction apply_step(const BimanualAction& a, const ActionGrad& g, double step);

double e_vel(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg = {});
double e_accel(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg = {});
double e_jerk(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg = {});
double e_sync(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg = {});
double e_ee(const BimanualAction& a, const CoordConfig& cfg = {});
double e_joint(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg = {});

ActionGrad e_vel_grad(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg = {});
ActionGrad e_accel_grad(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg = {});
ActionGrad e_jerk_grad(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg = {});
ActionGrad e_sync_grad(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg = {});
ActionGrad e_ee_grad(const BimanualAction& a, const CoordConfig& cfg = {});

struct JointTerm {
  double value = 0.0;
  ActionGrad grad;
  JointConfig left, right;
  bool projected = false;  // an end-effector target was outside its annulus
  bool singular = false;   // elbow at a branch boundary; gradient zeroed
};
/// Joint-space clearance with implicit differentiation through the IK solution.
JointTerm joint_term(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg = {});

/// All six values; disabled groups report 0.
TermArray term_values(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg, bool* ik_flagged = nullptr);
std::array<ActionGrad, kNumTerms> term_gradients(const BimanualAction& a, const PoseHistory& h,
                                                 const CoordConfig& cfg);

/// Weight predictor: softmax over six logits of an MLP on [a^L; a^R; v^L; v^R].
struct WeightNet {
  Mlp params;
  static constexpr int kInputDim = 4 * kArmDim;
  static constexpr const char* kInputLayout = "a_left[7],a_right[7],v_left[7],v_right[7]";

  /// Relu hidden layers with a zero-initialized output layer (uniform weights).
  static WeightNet initial(std::vector<int> hidden = {32}, std::uint64_t seed = 0);
  void validate() const;
};

Vec weight_net_input(const BimanualAction& a, const PoseHistory& h);
TermArray predict_weights(const WeightNet& wn, const BimanualAction& a, const PoseHistory& h);
TermArray uniform_weights();

/// Weighted coordination energy with weights predicted at (a, h). With no
/// weight net the weights are uniform.
EnergyBreakdown coord_energy(const BimanualAction& a, const PoseHistory& h, const WeightNet* wn,
                             const CoordConfig& cfg);
EnergyBreakdown coord_energy_weighted(const BimanualAction& a, const PoseHistory& h, const TermArray& weights,
                                      const CoordConfig& cfg);

/// d E_coord / d a with the weights held constant.
ActionGrad coord_gradient(const BimanualAction& a, const PoseHistory& h, const WeightNet* wn, const CoordConfig& cfg);
ActionGrad coord_gradient_weighted(const BimanualAction& a, const PoseHistory& h, const TermArray& weights,
                                   const CoordConfig& cfg);

/// E_total = E_comp(state, t) + E_coord(coord_point). `coord_point` is the
/// physical bimanual action the coordination terms are evaluated at.
EnergyBreakdown total_energy(const BimanualField& field, const ArmPair& state, double t,
                             const BimanualAction& coord_point, const PoseHistory& h, const WeightNet* wn,
                             const CoordConfig& cfg);

/// One backtracking (Armijo) gradient-descent step on E_coord from `x`, with
/// the weights fixed at x. `delta` is the accepted displacement in physical
/// units (zero if no decrease was found).
struct CoordDescent {
  ActionGrad delta;
  double step = 0.0;
  EnergyBreakdown before;
  double energy_after = 0.0;
  std::array<ActionGrad, kNumTerms> term_grads;
};
CoordDescent coordination_descent(const BimanualAction& x, const PoseHistory& h, const WeightNet* wn,
                                  const CoordConfig& cfg, double max_step);

}  // namespace coordflow
