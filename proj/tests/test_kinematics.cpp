#include "coordflow/kinematics.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace coordflow;

namespace {

ArmGeometry unit_arm() {
  ArmGeometry g;
  g.l1 = g.l2 = 1.0;
  return g;
}

Eigen::Vector2d random_reachable(const ArmGeometry& g, Rng& rng) {
  // Uniform over the annulus, kept 1e-6 inside both boundaries.
  const double rmin = g.reach_min() + 1e-6, rmax = g.reach_max() - 1e-6;
  const double r = std::sqrt(rng.uniform(rmin * rmin, rmax * rmax));
  const double phi = rng.uniform(-std::numbers::pi, std::numbers::pi);
  return g.base + r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
}

}  // namespace

TEST_CASE("pos_extract returns the position slots") {
  ArmVec v;
  v << 1, 2, 0, 0, 0, 0, 0.5;
  CHECK(pos_extract(ArmAction(v)) == Eigen::Vector3d(1, 2, 0));
  CHECK(pos_extract(ArmAction()) == Eigen::Vector3d::Zero());
  const ArmVec r = seeded_normal(3, 7);
  CHECK(pos_extract(ArmAction(r)) == r.head<3>());
}

TEST_CASE("forward_kin examples") {
  const ArmGeometry g = unit_arm();
  const double h = std::numbers::pi / 2;
  CHECK((forward_kin(g, {0, 0}) - Eigen::Vector2d(2, 0)).norm() < 1e-15);
  CHECK((forward_kin(g, {h, 0}) - Eigen::Vector2d(0, 2)).norm() < 1e-15);
  CHECK((forward_kin(g, {0, h}) - Eigen::Vector2d(1, 1)).norm() < 1e-15);
  ArmGeometry shifted = g;
  shifted.base = {-0.6, 0.0};
  CHECK((forward_kin(shifted, {0, 0}) - Eigen::Vector2d(1.4, 0)).norm() < 1e-15);
}

TEST_CASE("fk_jacobian matches central differences") {
  const ArmGeometry g = default_left_geometry();
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const JointConfig j{rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const Eigen::Matrix2d J = fk_jacobian(g, j);
    const double h = 1e-6;
    const Eigen::Vector2d d1 = (forward_kin(g, {j.theta1 + h, j.theta2}) - forward_kin(g, {j.theta1 - h, j.theta2})) / (2 * h);
    const Eigen::Vector2d d2 = (forward_kin(g, {j.theta1, j.theta2 + h}) - forward_kin(g, {j.theta1, j.theta2 - h})) / (2 * h);
    CHECK((J.col(0) - d1).norm() < 1e-8);
    CHECK((J.col(1) - d2).norm() < 1e-8);
  }
}

TEST_CASE("inverse_kin: straight arm is unique") {
  const JointConfig j = inverse_kin(unit_arm(), {2, 0}, {1.0, -2.0});
  CHECK(std::abs(j.theta1) < 1e-7);
  CHECK(std::abs(j.theta2) < 1e-7);
}

TEST_CASE("inverse_kin: target (1, 1) picks the branch nearer the seed") {
  // cos(theta2) = (1 + 1 - 1 - 1) / 2 = 0, so theta2 = +-pi/2. The branches are
  // (0, +pi/2) and (pi/2, -pi/2).
  const ArmGeometry g = unit_arm();
  const double h = std::numbers::pi / 2;
  const JointConfig up = inverse_kin(g, {1, 1}, {0.1, 1.4});
  CHECK(up.theta1 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(up.theta2 == doctest::Approx(h));
  const JointConfig down = inverse_kin(g, {1, 1}, {1.4, -1.4});
  CHECK(down.theta1 == doctest::Approx(h));
  CHECK(down.theta2 == doctest::Approx(-h));
}

TEST_CASE("inverse_kin: unreachable target carries the clamp distance") {
  try {
    inverse_kin(unit_arm(), {3, 0}, {});
    FAIL("expected UnreachableTarget");
  } catch (const UnreachableTarget& e) {
    CHECK(e.clamp_distance() == doctest::Approx(1.0));
    CHECK((e.projected() - Eigen::Vector2d(2, 0)).norm() < 1e-12);
  }
  ArmGeometry g = unit_arm();
  g.l2 = 0.5;
  CHECK_THROWS_AS(inverse_kin(g, {0.2, 0}, {}), UnreachableTarget);  // inside the hole
}

TEST_CASE("inverse_kin_projected flags and clamps") {
  const IkResult r = inverse_kin_projected(unit_arm(), {3, 0}, {});
  CHECK(r.projected);
  CHECK((forward_kin(unit_arm(), r.joints) - Eigen::Vector2d(2, 0)).norm() < 1e-9);
  CHECK_FALSE(inverse_kin_projected(unit_arm(), {1, 1}, {}).projected);
}

TEST_CASE("inverse_kin: round trip and branch optimality on 1000 random targets") {
  const ArmGeometry g = default_right_geometry();
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector2d target = random_reachable(g, rng);
    const JointConfig seed{rng.uniform(-std::numbers::pi, std::numbers::pi),
                           rng.uniform(-std::numbers::pi, std::numbers::pi)};
    const JointConfig j = inverse_kin(g, target, seed);
    CHECK((forward_kin(g, j) - target).norm() < 1e-9);
    // Brute force over both analytic branches.
    const auto branches = ik_branches(g, target);
    const double d = joint_distance(j, seed);
    for (const auto& b : branches) {
      CHECK((forward_kin(g, b) - target).norm() < 1e-9);
      CHECK(d <= joint_distance(b, seed) + 1e-12);
    }
    CHECK(j.theta1 > -std::numbers::pi);
    CHECK(j.theta1 <= std::numbers::pi);
    CHECK(j.theta2 > -std::numbers::pi);
    CHECK(j.theta2 <= std::numbers::pi);
  }
}

TEST_CASE("inverse_kin: small target steps never jump branches") {
  const ArmGeometry g = default_left_geometry();
  JointConfig j{0.3, 1.2};
  Eigen::Vector2d p = forward_kin(g, j);
  const Eigen::Vector2d dir = Eigen::Vector2d(0.6, 0.8);
  for (int k = 0; k < 400; ++k) {
    p += 1e-3 * Eigen::Vector2d(dir.x() * std::cos(0.02 * k), dir.y() * std::sin(0.01 * k));
    if (const double r = (p - g.base).norm(); r < g.reach_min() + 1e-3 || r > g.reach_max() - 1e-3) break;
    const JointConfig next = inverse_kin(g, p, j);
    CHECK(joint_distance(next, j) < 0.1);
    j = next;
  }
}

TEST_CASE("joint_distance wraps differences") {
  CHECK(joint_distance({3.1, 0}, {-3.1, 0}) == doctest::Approx(2 * std::numbers::pi - 6.2));
  CHECK(joint_distance({0, 0}, {0.3, 0.4}) == doctest::Approx(0.5));
}

TEST_CASE("project_reachable lands on the annulus") {
  ArmGeometry g = unit_arm();
  g.l2 = 0.4;
  CHECK((project_reachable(g, {5, 0}) - Eigen::Vector2d(1.4, 0)).norm() < 1e-12);
  CHECK((project_reachable(g, {0, 0.1}) - Eigen::Vector2d(0, 0.6)).norm() < 1e-12);
  CHECK((project_reachable(g, {1, 0}) - Eigen::Vector2d(1, 0)).norm() == 0.0);
}

TEST_CASE("ArmGeometry rejects non-positive links") {
  ArmGeometry g;
  g.l1 = 0.0;
  CHECK_THROWS(g.validate());
}
