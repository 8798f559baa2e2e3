#include "coordflow/coordination.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace coordflow;

namespace {

ArmVec unit(int i) { return ArmVec::Unit(i); }

BimanualAction pair(const ArmVec& l, const ArmVec& r) { return {ArmAction(l), ArmAction(r)}; }

// History with past[k] = a - (k + 1) * v per arm (constant velocity).
PoseHistory constant_velocity(const BimanualAction& a, const ArmVec& vl, const ArmVec& vr) {
  PoseHistory h;
  for (int k = 0; k < 3; ++k) h.past[k] = pair(a.left.v - (k + 1) * vl, a.right.v - (k + 1) * vr);
  return h;
}

PoseHistory still(const BimanualAction& a) { return PoseHistory::constant(a, {0.3, 1.0}, {2.8, -1.0}); }

BimanualAction separated() { return {ArmAction::planar(-0.5, 0.4, 0.1, 0.0), ArmAction::planar(0.5, 0.4, -0.1, 1.0)}; }

// Central differences of f over all 14 action coordinates.
template <typename F>
ActionGrad fd_grad(const BimanualAction& a, F f, double h = 1e-6) {
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

double grad_rel_error(const ActionGrad& analytic, const ActionGrad& fd) {
  Eigen::Matrix<double, 14, 1> x, y;
  x << analytic.left, analytic.right;
  y << fd.left, fd.right;
  return (x - y).norm() / std::max({x.norm(), y.norm(), 1e-8});
}

// A random state with both arms strictly inside their annuli, elbows away
// from the straight configuration, IK seeds close to the true joints, and a
// random history.
struct RandomState {
  BimanualAction a;
  PoseHistory h;
};

RandomState random_state(Rng& rng, const CoordConfig& cfg) {
  const auto joints = [&] {
    const double s = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return JointConfig{rng.uniform(-std::numbers::pi, std::numbers::pi), s * rng.uniform(0.4, 2.7)};
  };
  const JointConfig ql = joints(), qr = joints();
  RandomState st;
  ArmVec l = rng.normal_vec(kArmDim), r = rng.normal_vec(kArmDim);
  l.head<2>() = forward_kin(cfg.left_geom, ql);
  r.head<2>() = forward_kin(cfg.right_geom, qr);
  st.a = pair(l, r);
  for (int k = 0; k < 3; ++k)
    st.h.past[k] = pair(l + 0.3 * ArmVec(rng.normal_vec(kArmDim)), r + 0.3 * ArmVec(rng.normal_vec(kArmDim)));
  st.h.joints_left = {ql.theta1 + 0.01, ql.theta2 - 0.01};
  st.h.joints_right = {qr.theta1 - 0.01, qr.theta2 + 0.01};
  return st;
}

}  // namespace

TEST_CASE("e_vel examples") {
  const BimanualAction a = separated();
  CHECK(e_vel(a, still(a)) == 0.0);
  PoseHistory h = still(a);
  h.past[0].left.v -= unit(4);
  CHECK(e_vel(a, h) == 1.0);
  ArmVec d = ArmVec::Zero();
  d.head<2>() << 0.3, 0.4;
  CHECK(e_vel(a, constant_velocity(a, d, d)) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("e_accel examples") {
  const BimanualAction a = separated();
  CHECK(e_accel(a, constant_velocity(a, unit(0) * 0.2, unit(3))) < 1e-24);
  const BimanualAction two = pair(2.0 * unit(5), 2.0 * unit(5));
  CHECK(e_accel(two, PoseHistory::constant(pair(ArmVec::Zero(), ArmVec::Zero()), {}, {})) == 8.0);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const RandomState s = random_state(rng, {});
    double direct = 0;
    for (const auto& [x, p1, p2] : {std::tuple{s.a.left.v, s.h.past[0].left.v, s.h.past[1].left.v},
                                    std::tuple{s.a.right.v, s.h.past[0].right.v, s.h.past[1].right.v}})
      direct += (x - 2 * p1 + p2).squaredNorm();
    CHECK(e_accel(s.a, s.h) == doctest::Approx(direct).epsilon(1e-13));
  }
}

TEST_CASE("e_jerk examples") {
  // Positions quadratic in time: p(k) = k^2 c.
  const ArmVec c = ArmVec::LinSpaced(7, 0.1, 0.7);
  PoseHistory h;
  const BimanualAction a = pair(9.0 * c, -9.0 * c);
  for (int k = 0; k < 3; ++k) {
    const double s = (2 - k) * (2 - k);
    h.past[k] = pair(s * c, -s * c);
  }
  CHECK(std::abs(e_jerk(a, h)) < 1e-24);
  const BimanualAction one = pair(unit(6), unit(6));
  CHECK(e_jerk(one, PoseHistory::constant(pair(ArmVec::Zero(), ArmVec::Zero()), {}, {})) == 2.0);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const RandomState s = random_state(rng, {});
    const auto arm = [&](const ArmVec& x, const ArmVec& p1, const ArmVec& p2, const ArmVec& p3) {
      return (x - 3 * p1 + 3 * p2 - p3).squaredNorm();
    };
    const double direct = arm(s.a.left.v, s.h.past[0].left.v, s.h.past[1].left.v, s.h.past[2].left.v) +
                          arm(s.a.right.v, s.h.past[0].right.v, s.h.past[1].right.v, s.h.past[2].right.v);
    CHECK(e_jerk(s.a, s.h) == doctest::Approx(direct).epsilon(1e-13));
  }
}

TEST_CASE("e_sync examples") {
  const BimanualAction a = separated();
  const ArmVec v = ArmVec::LinSpaced(7, -0.3, 0.3);
  CHECK(e_sync(a, constant_velocity(a, v, v)) == doctest::Approx(0.0).scale(1e-15));
  CHECK(e_sync(a, constant_velocity(a, unit(0), unit(1))) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(e_sync(a, constant_velocity(a, 2.0 * unit(0), unit(0))) == doctest::Approx(1.0).epsilon(1e-14));
  // One arm at rest: only the magnitude term remains.
  CHECK(e_sync(a, constant_velocity(a, ArmVec::Zero(), 0.5 * unit(2))) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("e_ee examples") {
  const CoordConfig cfg;
  CHECK(e_ee(pair(0.25 * unit(0), -0.25 * unit(0)), cfg) == 0.0);
  CHECK(e_ee(pair(unit(1), unit(1)), cfg) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(e_ee(pair(0.0005 * unit(2), ArmVec::Zero()), cfg) == doctest::Approx(2.5e-7).epsilon(1e-9));
  // Orientation and gripper slots do not enter the distance.
  CHECK(e_ee(pair(unit(3) + unit(6), ArmVec::Zero()), cfg) == doctest::Approx(1e-6).epsilon(1e-12));
}

TEST_CASE("e_joint examples") {
  const CoordConfig cfg;
  const JointConfig q{0.4, 1.3};
  const auto at = [&](const JointConfig& ql, const JointConfig& qr) {
    ArmVec l = ArmVec::Zero(), r = ArmVec::Zero();
    l.head<2>() = forward_kin(cfg.left_geom, ql);
    r.head<2>() = forward_kin(cfg.right_geom, qr);
    const BimanualAction a = pair(l, r);
    return e_joint(a, PoseHistory::constant(a, ql, qr), cfg);
  };
  CHECK(at({0.4, 1.3}, {2.5, -1.3}) == 0.0);
  CHECK(at(q, q) == doctest::Approx(1e-6).epsilon(1e-9));
  CHECK(at(q, {q.theta1 + 0.0004, q.theta2}) == doctest::Approx(3.6e-7).epsilon(1e-6));
}

TEST_CASE("terms are non-negative on random states") {
  Rng rng(3);
  CoordConfig cfg;
  cfg.d_safe = 0.5;
  cfg.d_safe_joint = 2.0;
  for (int i = 0; i < 200; ++i) {
    const RandomState s = random_state(rng, cfg);
    for (double t : term_values(s.a, s.h, cfg)) CHECK(t >= 0.0);
  }
}

TEST_CASE("analytic gradients match central differences on 200 random states") {
  // Large clearances keep both hinges active so their gradients are exercised.
  CoordConfig cfg;
  cfg.d_safe = 3.0;
  cfg.d_safe_joint = 10.0;
  Rng rng(4);
  double worst[kNumTerms] = {};
  for (int i = 0; i < 200; ++i) {
    const RandomState s = random_state(rng, cfg);
    const auto g = term_gradients(s.a, s.h, cfg);
    const std::array<std::function<double(const BimanualAction&)>, kNumTerms> f{
        [&](const BimanualAction& x) { return e_vel(x, s.h, cfg); },
        [&](const BimanualAction& x) { return e_accel(x, s.h, cfg); },
        [&](const BimanualAction& x) { return e_jerk(x, s.h, cfg); },
        [&](const BimanualAction& x) { return e_sync(x, s.h, cfg); },
        [&](const BimanualAction& x) { return e_ee(x, cfg); },
        [&](const BimanualAction& x) { return e_joint(x, s.h, cfg); }};
    for (int k = 0; k < kNumTerms; ++k) worst[k] = std::max(worst[k], grad_rel_error(g[k], fd_grad(s.a, f[k])));
    const TermArray w = predict_weights(WeightNet::initial({32}, i), s.a, s.h);
    const ActionGrad total = coord_gradient_weighted(s.a, s.h, w, cfg);
    CHECK(grad_rel_error(total, fd_grad(s.a, [&](const BimanualAction& x) {
            return coord_energy_weighted(x, s.h, w, cfg).e_coord;
          })) < 1e-4);
  }
  for (int k = 0; k < kNumTerms; ++k) {
    INFO(term_name(static_cast<Term>(k)));
    CHECK(worst[k] < 1e-4);
  }
}

TEST_CASE("e_vel gradient is twice the difference") {
  const BimanualAction a = separated();
  const ArmVec d = ArmVec::LinSpaced(7, 1.0, 2.0);
  const PoseHistory h = constant_velocity(a, d, -d);
  const ActionGrad g = e_vel_grad(a, h);
  CHECK((g.left - 2.0 * d).norm() < 1e-14);
  CHECK((g.right + 2.0 * d).norm() < 1e-14);
}

TEST_CASE("zero energies have zero gradient") {
  const BimanualAction a = separated();
  const ActionGrad g = coord_gradient(a, still(a), nullptr, CoordConfig{});
  CHECK(g.squared_norm() == 0.0);
  CHECK(coord_energy(a, still(a), nullptr, CoordConfig{}).e_coord == 0.0);
}

TEST_CASE("hinges are C1 at the clearance boundary") {
  CoordConfig cfg;
  const double h = 1e-7;
  // End-effectors exactly d_safe apart along x.
  const BimanualAction a = pair(cfg.d_safe * unit(0), ArmVec::Zero());
  const auto e = [&](double dx) { return e_ee(pair((cfg.d_safe + dx) * unit(0), ArmVec::Zero()), cfg); };
  CHECK(e(0.0) == 0.0);
  CHECK(std::abs((e(h) - e(0.0)) / h) < 1e-6);
  CHECK(std::abs((e(0.0) - e(-h)) / h) < 1e-6);
  CHECK(e_ee_grad(a, cfg).squared_norm() == 0.0);
  // Joint configurations exactly d_safe_joint apart.
  const JointConfig ql{0.4, 1.3}, qr{0.4 + cfg.d_safe_joint, 1.3};
  const auto ej = [&](double dtheta) {
    const JointConfig q{qr.theta1 + dtheta, qr.theta2};
    ArmVec l = ArmVec::Zero(), r = ArmVec::Zero();
    l.head<2>() = forward_kin(cfg.left_geom, ql);
    r.head<2>() = forward_kin(cfg.right_geom, q);
    const BimanualAction b = pair(l, r);
    return e_joint(b, PoseHistory::constant(b, ql, q), cfg);
  };
  CHECK(std::abs((ej(h) - ej(0.0)) / h) < 1e-6);
  CHECK(std::abs((ej(0.0) - ej(-h)) / h) < 1e-6);
}

TEST_CASE("temporal terms are translation invariant") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const RandomState s = random_state(rng, {});
    const ArmVec c = rng.normal_vec(kArmDim) * 3.0;
    BimanualAction a = s.a;
    PoseHistory h = s.h;
    a.left.v += c;
    a.right.v += c;
    for (auto& p : h.past) {
      p.left.v += c;
      p.right.v += c;
    }
    CHECK(e_vel(a, h) == doctest::Approx(e_vel(s.a, s.h)).epsilon(1e-12));
    CHECK(e_accel(a, h) == doctest::Approx(e_accel(s.a, s.h)).epsilon(1e-12));
    CHECK(e_jerk(a, h) == doctest::Approx(e_jerk(s.a, s.h)).epsilon(1e-12));
    CHECK(e_sync(a, h) == doctest::Approx(e_sync(s.a, s.h)).epsilon(1e-11));
  }
}

TEST_CASE("weights: zero net is uniform, simplex on 1e4 random inputs") {
  const WeightNet wn = WeightNet::initial();
  wn.validate();
  const BimanualAction a = separated();
  for (double w : predict_weights(wn, a, still(a))) CHECK(w == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  Rng rng(6);
  WeightNet random = wn;
  random.params = Mlp::glorot(wn.params.spec, rng);
  for (auto& b : random.params.biases) b = rng.normal_vec(b.size());
  for (int i = 0; i < 10000; ++i) {
    const RandomState s = random_state(rng, {});
    const TermArray w = predict_weights(random, s.a, s.h);
    double sum = 0;
    for (double x : w) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("weight net input layout") {
  const BimanualAction a = pair(unit(0), 2.0 * unit(1));
  const PoseHistory h = constant_velocity(a, unit(2), unit(3));
  const Vec in = weight_net_input(a, h);
  REQUIRE(in.size() == 28);
  CHECK(in.segment<7>(0) == unit(0));
  CHECK(in.segment<7>(7) == 2.0 * unit(1));
  CHECK(in.segment<7>(14) == unit(2));
  CHECK(in.segment<7>(21) == unit(3));
}

TEST_CASE("uniform weights over terms (6, 0, 0, 0, 0, 0) give 1") {
  const BimanualAction a = separated();
  const ArmVec v = std::sqrt(3.0) * unit(3);  // yaw only; positions stay put
  const PoseHistory h = constant_velocity(a, v, v);
  const EnergyBreakdown b = coord_energy(a, h, nullptr, CoordConfig{});
  CHECK(b.e_vel == doctest::Approx(6.0).epsilon(1e-14));
  CHECK(b.e_accel == doctest::Approx(0.0).scale(1e-14));
  CHECK(b.e_jerk == doctest::Approx(0.0).scale(1e-14));
  CHECK(b.e_sync == doctest::Approx(0.0).scale(1e-14));
  CHECK(b.e_ee == 0.0);
  CHECK(b.e_joint == 0.0);
  CHECK(b.e_coord == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("coord energy matches a recomputation from the six terms") {
  Rng rng(7);
  CoordConfig cfg;
  cfg.d_safe = 0.6;
  cfg.d_safe_joint = 1.5;
  WeightNet wn = WeightNet::initial({32}, 3);
  wn.params.weights.back() = Eigen::MatrixXd::Random(6, 32) * 0.1;
  for (int i = 0; i < 50; ++i) {
    const RandomState s = random_state(rng, cfg);
    const TermArray w = predict_weights(wn, s.a, s.h);
    const double direct = w[0] * e_vel(s.a, s.h, cfg) + w[1] * e_accel(s.a, s.h, cfg) + w[2] * e_jerk(s.a, s.h, cfg) +
                          w[3] * e_sync(s.a, s.h, cfg) + w[4] * e_ee(s.a, cfg) + w[5] * e_joint(s.a, s.h, cfg);
    CHECK(coord_energy(s.a, s.h, &wn, cfg).e_coord == doctest::Approx(direct).epsilon(1e-13));
  }
}

TEST_CASE("disabled groups report zero") {
  Rng rng(8);
  CoordConfig cfg;
  cfg.d_safe = 3.0;
  cfg.d_safe_joint = 10.0;
  const RandomState s = random_state(rng, cfg);
  cfg.temporal = false;
  TermArray t = term_values(s.a, s.h, cfg);
  CHECK(t[0] == 0.0);
  CHECK(t[3] == 0.0);
  CHECK(t[4] > 0.0);
  cfg.temporal = true;
  cfg.spatial = false;
  t = term_values(s.a, s.h, cfg);
  CHECK(t[0] > 0.0);
  CHECK(t[4] == 0.0);
  CHECK(t[5] == 0.0);
}

TEST_CASE("position-only mode ignores the orientation and gripper slots") {
  CoordConfig cfg;
  cfg.position_only = true;
  const BimanualAction a = separated();
  const PoseHistory h = constant_velocity(a, unit(4) + unit(6), unit(5));
  CHECK(e_vel(a, h, cfg) == 0.0);
  CHECK(e_sync(a, h, cfg) == 0.0);
  CHECK(e_vel(a, h) == 3.0);
}

TEST_CASE("total energy adds the generative proxy and the coordination energy") {
  const double c = std::sqrt(5.0);
  const FunctionField field(7, 7, [&](const ArmPair& s, double) {
    ArmPair v{Vec::Zero(s.left.size()), Vec::Zero(s.right.size())};
    v.left[0] = c;  // 1/2 |v|^2 = 2.5
    return v;
  });
  const BimanualAction a = separated();
  const ArmVec v = std::sqrt(4.5) * unit(3);  // e_vel = 9, uniform weights -> 1.5
  const ArmPair state{Vec::Zero(7), Vec::Zero(7)};
  const EnergyBreakdown b = total_energy(field, state, 0.0, a, constant_velocity(a, v, v), nullptr, CoordConfig{});
  CHECK(b.e_comp == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(b.e_coord == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(b.e_total == doctest::Approx(4.0).epsilon(1e-14));
  const EnergyBreakdown z = total_energy(FunctionField(7, 7, [](const ArmPair& s, double) {
    return ArmPair{Vec::Zero(s.left.size()), Vec::Zero(s.right.size())};
  }), state, 0.0, a, still(a), nullptr, CoordConfig{});
  CHECK(z.e_total == 0.0);
}

TEST_CASE("one coordination descent step lowers the energy") {
  CoordConfig cfg;
  cfg.d_safe = 0.4;
  cfg.d_safe_joint = 1.0;
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const RandomState s = random_state(rng, cfg);
    const CoordDescent d = coordination_descent(s.a, s.h, nullptr, cfg, 3.0);
    if (d.before.e_coord == 0.0) continue;
    CHECK(d.step > 0.0);
    CHECK(d.energy_after < d.before.e_coord);
    CHECK(coord_energy(apply_step(s.a, d.delta, 1.0), s.h, nullptr, cfg).e_coord ==
          doctest::Approx(d.energy_after).epsilon(1e-12));
  }
}
