#include "coordflow/coordination.hpp"

#include <algorithm>
#include <cmath>

namespace coordflow {

PoseHistory PoseHistory::constant(const BimanualAction& a, const JointConfig& jl, const JointConfig& jr) {
  PoseHistory h;
  h.past.fill(a);
  h.joints_left = jl;
  h.joints_right = jr;
  return h;
}

void PoseHistory::push(const BimanualAction& executed, const JointConfig& jl, const JointConfig& jr) {
  past[2] = past[1];
  past[1] = past[0];
  past[0] = executed;
  joints_left = jl;
  joints_right = jr;
}

const char* term_name(Term t) {
  switch (t) {
    case Term::vel: return "vel";
    case Term::accel: return "accel";
    case Term::jerk: return "jerk";
    case Term::sync: return "sync";
    case Term::ee: return "ee";
    case Term::joint: return "joint";
  }
  return "?";
}

void EnergyBreakdown::set_terms(const TermArray& t) {
  e_vel = t[0];
  e_accel = t[1];
  e_jerk = t[2];
  e_sync = t[3];
  e_ee = t[4];
  e_joint = t[5];
}

BimanualAction apply_step(const BimanualAction& a, const ActionGrad& g, double step) {
  return {ArmAction(a.left.v + step * g.left), ArmAction(a.right.v + step * g.right)};
}

namespace {

ArmVec mask(const CoordConfig& cfg) {
  ArmVec m = ArmVec::Ones();
  if (cfg.position_only) m.tail<4>().setZero();
  return m;
}

// Finite difference of order k ending at a, masked.
struct Diff {
  ArmVec left, right;
};

Diff difference(const BimanualAction& a, const PoseHistory& h, int order, const CoordConfig& cfg) {
  static constexpr double coeff[3][3] = {{-1, 0, 0}, {-2, 1, 0}, {-3, 3, -1}};
  ArmVec l = a.left.v, r = a.right.v;
  for (int k = 0; k < order; ++k) {
    l += coeff[order - 1][k] * h.past[k].left.v;
    r += coeff[order - 1][k] * h.past[k].right.v;
  }
  const ArmVec m = mask(cfg);
  return {l.cwiseProduct(m), r.cwiseProduct(m)};
}

double diff_energy(const BimanualAction& a, const PoseHistory& h, int order, const CoordConfig& cfg) {
  const Diff d = difference(a, h, order, cfg);
  return d.left.squaredNorm() + d.right.squaredNorm();
}

// The coefficient of a in every difference is 1, so the gradient is 2 d.
ActionGrad diff_grad(const BimanualAction& a, const PoseHistory& h, int order, const CoordConfig& cfg) {
  const Diff d = difference(a, h, order, cfg);
  return {2.0 * d.left, 2.0 * d.right};
}

constexpr double kSpeedFloor = 1e-9;

double gate(double n, double g) { return std::min(1.0, n / g); }

}  // namespace

double e_vel(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg) { return diff_energy(a, h, 1, cfg); }
double e_accel(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg) {
  return diff_energy(a, h, 2, cfg);
}
double e_jerk(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg) {
  return diff_energy(a, h, 3, cfg);
}
ActionGrad e_vel_grad(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg) {
  return diff_grad(a, h, 1, cfg);
}
ActionGrad e_accel_grad(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg) {
  return diff_grad(a, h, 2, cfg);
}
ActionGrad e_jerk_grad(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg) {
  return diff_grad(a, h, 3, cfg);
}

// (|vL| - |vR|)^2 + g(|vL|) g(|vR|) |vL/|vL| - vR/|vR||^2. The direction part
// vanishes when either arm is (numerically) at rest.
double e_sync(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg) {
  const Diff v = difference(a, h, 1, cfg);
  const double nl = v.left.norm(), nr = v.right.norm();
  double e = (nl - nr) * (nl - nr);
  if (nl >= kSpeedFloor && nr >= kSpeedFloor)
    e += gate(nl, cfg.sync_gate) * gate(nr, cfg.sync_gate) * (v.left / nl - v.right / nr).squaredNorm();
  return e;
}

ActionGrad e_sync_grad(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg) {
  const Diff v = difference(a, h, 1, cfg);
  const ArmVec m = mask(cfg);
  const double nl = v.left.norm(), nr = v.right.norm();
  ActionGrad g;
  if (nl > 0) g.left += 2.0 * (nl - nr) * v.left / nl;
  if (nr > 0) g.right -= 2.0 * (nl - nr) * v.right / nr;
  if (nl >= kSpeedFloor && nr >= kSpeedFloor) {
    const ArmVec ul = v.left / nl, ur = v.right / nr;
    const double d0 = (ul - ur).squaredNorm();
    const double gl = gate(nl, cfg.sync_gate), gr = gate(nr, cfg.sync_gate);
    // d|uL - uR|^2 / dvL = -2 (I - uL uL^T) uR / |vL|
    const ArmVec dl = -2.0 * (ur - ul * ul.dot(ur)) / nl;
    const ArmVec dr = -2.0 * (ul - ur * ur.dot(ul)) / nr;
    g.left += gl * gr * dl;
    g.right += gl * gr * dr;
    if (nl < cfg.sync_gate) g.left += d0 * gr * ul / cfg.sync_gate;
    if (nr < cfg.sync_gate) g.right += d0 * gl * ur / cfg.sync_gate;
  }
  g.left = g.left.cwiseProduct(m);
  g.right = g.right.cwiseProduct(m);
  return g;
}

double e_ee(const BimanualAction& a, const CoordConfig& cfg) {
  const double d = (pos_extract(a.left) - pos_extract(a.right)).norm();
  const double gap = std::max(0.0, cfg.d_safe - d);
  return gap * gap;
}

ActionGrad e_ee_grad(const BimanualAction& a, const CoordConfig& cfg) {
  const Eigen::Vector3d diff = pos_extract(a.left) - pos_extract(a.right);
  const double d = diff.norm();
  const double gap = std::max(0.0, cfg.d_safe - d);
  ActionGrad g;
  if (gap == 0.0) return g;
  // Coincident end-effectors: push the left arm toward -x and the right toward +x.
  const Eigen::Vector3d n = d > 0 ? Eigen::Vector3d(diff / d) : Eigen::Vector3d(-1, 0, 0);
  g.left.head<3>() = -2.0 * gap * n;
  g.right.head<3>() = 2.0 * gap * n;
  return g;
}

JointTerm joint_term(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg) {
  JointTerm out;
  const IkResult il = inverse_kin_projected(cfg.left_geom, a.left.xy(), h.joints_left);
  const IkResult ir = inverse_kin_projected(cfg.right_geom, a.right.xy(), h.joints_right);
  out.left = il.joints;
  out.right = ir.joints;
  out.projected = il.projected || ir.projected;
  const Eigen::Vector2d delta(wrap_angle(il.joints.theta1 - ir.joints.theta1),
                              wrap_angle(il.joints.theta2 - ir.joints.theta2));
  const double d = delta.norm();
  const double gap = std::max(0.0, cfg.d_safe_joint - d);
  out.value = gap * gap;
  if (gap == 0.0) return out;

  const double sl = std::sin(il.joints.theta2), sr = std::sin(ir.joints.theta2);
  out.singular = std::abs(sl) < 1e-9 || std::abs(sr) < 1e-9;
  if (out.projected || out.singular) return out;

  const Eigen::Vector2d n = d > 0 ? Eigen::Vector2d(delta / d) : Eigen::Vector2d(1, 0);
  const Eigen::Vector2d dq_left = -2.0 * gap * n;
  const Eigen::Vector2d dq_right = 2.0 * gap * n;
  // q = IK(p) with J dq = dp, so dE/dp = J^{-T} dE/dq.
  const Eigen::Matrix2d jl = fk_jacobian(cfg.left_geom, il.joints);
  const Eigen::Matrix2d jr = fk_jacobian(cfg.right_geom, ir.joints);
  out.grad.left.head<2>() = jl.transpose().partialPivLu().solve(dq_left);
  out.grad.right.head<2>() = jr.transpose().partialPivLu().solve(dq_right);
  return out;
}

double e_joint(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg) {
  return joint_term(a, h, cfg).value;
}

TermArray term_values(const BimanualAction& a, const PoseHistory& h, const CoordConfig& cfg, bool* ik_flagged) {
  TermArray t{};
  if (cfg.temporal) {
    t[0] = e_vel(a, h, cfg);
    t[1] = e_accel(a, h, cfg);
    t[2] = e_jerk(a, h, cfg);
    t[3] = e_sync(a, h, cfg);
  }
  if (cfg.spatial) {
    t[4] = e_ee(a, cfg);
    const JointTerm jt = joint_term(a, h, cfg);
    t[5] = jt.value;
    if (ik_flagged) *ik_flagged = jt.value > 0 && (jt.projected || jt.singular);
  } else if (ik_flagged) {
    *ik_flagged = false;
  }
  return t;
}

std::array<ActionGrad, kNumTerms> term_gradients(const BimanualAction& a, const PoseHistory& h,
                                                 const CoordConfig& cfg) {
  std::array<ActionGrad, kNumTerms> g;
  if (cfg.temporal) {
    g[0] = e_vel_grad(a, h, cfg);
    g[1] = e_accel_grad(a, h, cfg);
    g[2] = e_jerk_grad(a, h, cfg);
    g[3] = e_sync_grad(a, h, cfg);
  }
  if (cfg.spatial) {
    g[4] = e_ee_grad(a, cfg);
    g[5] = joint_term(a, h, cfg).grad;
  }
  return g;
}

WeightNet WeightNet::initial(std::vector<int> hidden, std::uint64_t seed) {
  Rng rng(seed);
  WeightNet wn;
  wn.params = Mlp::glorot(MlpSpec{kInputDim, std::move(hidden), kNumTerms, Activation::relu}, rng);
  wn.params.weights.back().setZero();
  wn.params.biases.back().setZero();
  return wn;
}

void WeightNet::validate() const {
  params.spec.validate();
  if (!params.conforms()) throw ShapeError("weight net: parameter shapes do not match spec");
  if (params.spec.input_dim != kInputDim || params.spec.output_dim != kNumTerms)
    throw ShapeError("weight net: expected 28 inputs and 6 outputs");
}

Vec weight_net_input(const BimanualAction& a, const PoseHistory& h) {
  Vec in(WeightNet::kInputDim);
  in << a.left.v, a.right.v, a.left.v - h.prev().left.v, a.right.v - h.prev().right.v;
  return in;
}

TermArray predict_weights(const WeightNet& wn, const BimanualAction& a, const PoseHistory& h) {
  const Vec w = softmax(mlp_forward(wn.params, weight_net_input(a, h)));
  TermArray out;
  for (int i = 0; i < kNumTerms; ++i) out[i] = w[i];
  return out;
}

TermArray uniform_weights() {
  TermArray w;
  w.fill(1.0 / kNumTerms);
  return w;
}

EnergyBreakdown coord_energy_weighted(const BimanualAction& a, const PoseHistory& h, const TermArray& weights,
                                      const CoordConfig& cfg) {
  EnergyBreakdown b;
  const TermArray t = term_values(a, h, cfg, &b.ik_flagged);
  b.set_terms(t);
  b.weights = weights;
  for (int i = 0; i < kNumTerms; ++i) b.e_coord += weights[i] * t[i];
  b.e_total = b.e_coord;
  return b;
}

EnergyBreakdown coord_energy(const BimanualAction& a, const PoseHistory& h, const WeightNet* wn,
                             const CoordConfig& cfg) {
  return coord_energy_weighted(a, h, wn ? predict_weights(*wn, a, h) : uniform_weights(), cfg);
}

ActionGrad coord_gradient_weighted(const BimanualAction& a, const PoseHistory& h, const TermArray& weights,
                                   const CoordConfig& cfg) {
  const auto g = term_gradients(a, h, cfg);
  ActionGrad out;
  for (int i = 0; i < kNumTerms; ++i) out += g[i] * weights[i];
  return out;
}

ActionGrad coord_gradient(const BimanualAction& a, const PoseHistory& h, const WeightNet* wn, const CoordConfig& cfg) {
  return coord_gradient_weighted(a, h, wn ? predict_weights(*wn, a, h) : uniform_weights(), cfg);
}

EnergyBreakdown total_energy(const BimanualField& field, const ArmPair& state, double t,
                             const BimanualAction& coord_point, const PoseHistory& h, const WeightNet* wn,
                             const CoordConfig& cfg) {
  EnergyBreakdown b;
  if (cfg.any_enabled()) b = coord_energy(coord_point, h, wn, cfg);
  b.e_comp = field.energy_proxy(state, t);
  b.e_total = b.e_comp + b.e_coord;
  return b;
}

CoordDescent coordination_descent(const BimanualAction& x, const PoseHistory& h, const WeightNet* wn,
                                  const CoordConfig& cfg, double max_step) {
  CoordDescent out;
  const TermArray w = wn ? predict_weights(*wn, x, h) : uniform_weights();
  out.before = coord_energy_weighted(x, h, w, cfg);
  out.energy_after = out.before.e_coord;
  out.term_grads = term_gradients(x, h, cfg);
  ActionGrad g;
  for (int i = 0; i < kNumTerms; ++i) g += out.term_grads[i] * w[i];
  const double gg = g.squared_norm();
  if (!(gg > 0.0) || !(max_step > 0.0)) return out;
  double step = max_step;
  for (int k = 0; k < 40; ++k, step *= 0.5) {
    const double e = coord_energy_weighted(apply_step(x, g, -step), h, w, cfg).e_coord;
    if (e <= out.before.e_coord - 1e-4 * step * gg) {
      out.step = step;
      out.delta = g * (-step);
      out.energy_after = e;
      return out;
    }
  }
  return out;
}

}  // namespace coordflow
