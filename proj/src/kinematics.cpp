#include "coordflow/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace coordflow {

namespace {
constexpr double kReachTol = 1e-9;
}

void ArmGeometry::validate() const {
  if (!(l1 > 0.0) || !(l2 > 0.0)) throw std::invalid_argument("ArmGeometry: link lengths must be positive");
  if (!base.allFinite()) throw std::invalid_argument("ArmGeometry: base must be finite");
}

ArmGeometry default_left_geometry() { return ArmGeometry{{-0.6, 0.0}, 0.5, 0.5}; }
ArmGeometry default_right_geometry() { return ArmGeometry{{0.6, 0.0}, 0.5, 0.5}; }

double joint_distance(const JointConfig& a, const JointConfig& b) {
  return std::hypot(wrap_angle(a.theta1 - b.theta1), wrap_angle(a.theta2 - b.theta2));
}

Eigen::Vector2d forward_kin(const ArmGeometry& geom, const JointConfig& j) {
  const double t12 = j.theta1 + j.theta2;
  return geom.base + Eigen::Vector2d(geom.l1 * std::cos(j.theta1) + geom.l2 * std::cos(t12),
                                     geom.l1 * std::sin(j.theta1) + geom.l2 * std::sin(t12));
}

Eigen::Matrix2d fk_jacobian(const ArmGeometry& geom, const JointConfig& j) {
  const double s1 = std::sin(j.theta1), c1 = std::cos(j.theta1);
  const double s12 = std::sin(j.theta1 + j.theta2), c12 = std::cos(j.theta1 + j.theta2);
  Eigen::Matrix2d jac;
  jac << -geom.l1 * s1 - geom.l2 * s12, -geom.l2 * s12,  //
      geom.l1 * c1 + geom.l2 * c12, geom.l2 * c12;
  return jac;
}

UnreachableTarget::UnreachableTarget(double clamp_distance, Eigen::Vector2d projected)
    : std::runtime_error("inverse_kin: target unreachable (clamp distance " + std::to_string(clamp_distance) +
                         " m)"),
      clamp_distance_(clamp_distance),
      projected_(std::move(projected)) {}

std::array<JointConfig, 2> ik_branches(const ArmGeometry& geom, const Eigen::Vector2d& target) {
  const Eigen::Vector2d d = target - geom.base;
  const double r2 = d.squaredNorm();
  const double l1 = geom.l1, l2 = geom.l2;
  const double c = std::clamp((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0);
  const double s = std::sqrt(std::max(0.0, (1.0 - c) * (1.0 + c)));
  const double phi = std::atan2(d.y(), d.x());
  std::array<JointConfig, 2> out;
  for (int k = 0; k < 2; ++k) {
    const double sk = k == 0 ? s : -s;
    const double theta2 = std::atan2(sk, c);
    const double theta1 = phi - std::atan2(l2 * sk, l1 + l2 * c);
    out[k] = JointConfig{theta1, theta2}.normalized();
  }
  return out;
}

Eigen::Vector2d project_reachable(const ArmGeometry& geom, const Eigen::Vector2d& target) {
  const Eigen::Vector2d d = target - geom.base;
  const double r = d.norm();
  const double clamped = std::clamp(r, geom.reach_min(), geom.reach_max());
  if (clamped == r) return target;
  const Eigen::Vector2d dir = r > 0.0 ? Eigen::Vector2d(d / r) : Eigen::Vector2d::UnitX();
  return geom.base + clamped * dir;
}

JointConfig inverse_kin(const ArmGeometry& geom, const Eigen::Vector2d& target, const JointConfig& seed) {
  const double r = (target - geom.base).norm();
  if (r > geom.reach_max() + kReachTol || r < geom.reach_min() - kReachTol) {
    const Eigen::Vector2d p = project_reachable(geom, target);
    throw UnreachableTarget((target - p).norm(), p);
  }
  const auto branches = ik_branches(geom, target);
  const double d0 = joint_distance(branches[0], seed);
  const double d1 = joint_distance(branches[1], seed);
  return d1 < d0 ? branches[1] : branches[0];
}

IkResult inverse_kin_projected(const ArmGeometry& geom, const Eigen::Vector2d& target, const JointConfig& seed) {
  try {
    return IkResult{inverse_kin(geom, target, seed), target, false};
  } catch (const UnreachableTarget& e) {
    return IkResult{inverse_kin(geom, e.projected(), seed), e.projected(), true};
  }
}

}  // namespace coordflow
