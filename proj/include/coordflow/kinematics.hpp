// Planar two-link arm geometry and the 7-dim arm action layout.
#pragma once

#include "coordflow/numerics.hpp"

#include <array>

namespace coordflow {

inline constexpr int kArmDim = 7;
using ArmVec = Eigen::Matrix<double, kArmDim, 1>;

/// One arm's action: position (m) in slots 0-2, axis-angle orientation in 3-5,
/// gripper in 6. Planar tasks keep z = 0 and use only the first orientation slot.
struct ArmAction {
  ArmVec v = ArmVec::Zero();

  ArmAction() = default;
  explicit ArmAction(const ArmVec& values) : v(values) {}

  static ArmAction planar(double x, double y, double yaw, double gripper) {
    ArmAction a;
    a.v << x, y, 0.0, yaw, 0.0, 0.0, gripper;
    return a;
  }

  Eigen::Vector2d xy() const { return v.head<2>(); }
  double yaw() const { return v[3]; }
  double gripper() const { return v[6]; }
  bool all_finite() const { return v.allFinite(); }
};

/// pos(.): the 3D position sub-vector of an action.
inline Eigen::Vector3d pos_extract(const ArmAction& a) { return a.v.head<3>(); }

struct ArmGeometry {
  Eigen::Vector2d base = Eigen::Vector2d::Zero();
  double l1 = 0.5;
  double l2 = 0.5;

  void validate() const;
  double reach_min() const { return std::abs(l1 - l2); }
  double reach_max() const { return l1 + l2; }
};

/// Default desk layout: bases at (-0.6, 0) and (+0.6, 0), 0.5 m links.
ArmGeometry default_left_geometry();
ArmGeometry default_right_geometry();

struct JointConfig {
  double theta1 = 0.0;
  double theta2 = 0.0;

  Eigen::Vector2d vec() const { return {theta1, theta2}; }
  JointConfig normalized() const { return {wrap_angle(theta1), wrap_angle(theta2)}; }
};

/// Euclidean norm of the wrapped angle difference.
double joint_distance(const JointConfig& a, const JointConfig& b);

Eigen::Vector2d forward_kin(const ArmGeometry& geom, const JointConfig& j);

/// d(end-effector)/d(theta1, theta2).
Eigen::Matrix2d fk_jacobian(const ArmGeometry& geom, const JointConfig& j);

class UnreachableTarget : public std::runtime_error {
 public:
  UnreachableTarget(double clamp_distance, Eigen::Vector2d projected);
  /// Distance from the target to the nearest reachable point (m).
  double clamp_distance() const { return clamp_distance_; }
  Eigen::Vector2d projected() const { return projected_; }

 private:
  double clamp_distance_;
  Eigen::Vector2d projected_;
};

/// Both analytic elbow solutions, elbow-positive (theta2 >= 0) first.
std::array<JointConfig, 2> ik_branches(const ArmGeometry& geom, const Eigen::Vector2d& target);

/// Nearest point of the reachable annulus.
Eigen::Vector2d project_reachable(const ArmGeometry& geom, const Eigen::Vector2d& target);

/// Seeded analytic IK: the elbow branch nearest to `seed` in wrapped angle
/// space. Throws UnreachableTarget when the target lies outside the annulus
/// by more than 1e-9 m.
JointConfig inverse_kin(const ArmGeometry& geom, const Eigen::Vector2d& target, const JointConfig& seed);

struct IkResult {
  JointConfig joints;
  Eigen::Vector2d target_used;
  bool projected = false;  // target was outside the annulus and got clamped
};

/// inverse_kin with unreachable targets replaced by their projection.
IkResult inverse_kin_projected(const ArmGeometry& geom, const Eigen::Vector2d& target, const JointConfig& seed);

}  // namespace coordflow
