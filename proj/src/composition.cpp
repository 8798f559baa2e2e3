#include "coordflow/composition.hpp"

namespace coordflow {

namespace {

void require_conditional(const Conditioning& c, const char* who) {
  if (c.is_null) throw std::invalid_argument(std::string(who) + ": null conditioning passed as conditional");
}

ArmVec to_arm(const Vec& v) {
  if (v.size() != kArmDim) throw ShapeError("expected a 7-dim arm vector, got " + std::to_string(v.size()));
  return ArmVec(v);
}

}  // namespace

ArmPair comp_velocity(const PolicyCheckpoint& left_ckpt, const PolicyCheckpoint& right_ckpt, const ArmPair& a,
                      double t, const Conditioning& c_left, const Conditioning& c_right, const GuidanceWeights& w) {
  require_conditional(c_left, "comp_velocity");
  require_conditional(c_right, "comp_velocity");
  return {guided_velocity(left_ckpt, a.left, t, c_left, w.left),
          guided_velocity(right_ckpt, a.right, t, c_right, w.right)};
}

double comp_energy_proxy(const PolicyCheckpoint& left_ckpt, const PolicyCheckpoint& right_ckpt, const ArmPair& a,
                         double t, const Conditioning& c_left, const Conditioning& c_right) {
  require_conditional(c_left, "comp_energy_proxy");
  require_conditional(c_right, "comp_energy_proxy");
  return energy_proxy(left_ckpt, a.left, t, c_left) + energy_proxy(right_ckpt, a.right, t, c_right);
}

double BimanualField::energy_proxy(const ArmPair& state, double t) const {
  return 0.5 * velocity(state, t).squared_norm();
}

double BimanualField::energy_proxy_given(const ArmPair&, double, const ArmPair& v) const {
  return 0.5 * v.squared_norm();
}

ArmPair BimanualField::velocity_vjp(const ArmPair&, double, const ArmPair&) const {
  throw std::logic_error("velocity_vjp: field is not differentiable");
}

BimanualAction BimanualField::to_physical(const ArmPair& state) const {
  return {ArmAction(to_arm(left_normalizer().denormalize(state.left))),
          ArmAction(to_arm(right_normalizer().denormalize(state.right)))};
}

ArmPair BimanualField::to_normalized(const BimanualAction& a) const {
  return {left_normalizer().normalize(a.left.v), right_normalizer().normalize(a.right.v)};
}

ComposedField::ComposedField(const PolicyCheckpoint& left, const PolicyCheckpoint& right, Conditioning c_left,
                             Conditioning c_right, GuidanceWeights w)
    : left_(&left), right_(&right), c_left_(std::move(c_left)), c_right_(std::move(c_right)), w_(w) {
  require_conditional(c_left_, "ComposedField");
  require_conditional(c_right_, "ComposedField");
}

ArmPair ComposedField::velocity(const ArmPair& state, double t) const {
  return comp_velocity(*left_, *right_, state, t, c_left_, c_right_, w_);
}

double ComposedField::energy_proxy(const ArmPair& state, double t) const {
  return comp_energy_proxy(*left_, *right_, state, t, c_left_, c_right_);
}

ArmPair ComposedField::velocity_vjp(const ArmPair& state, double t, const ArmPair& cot) const {
  return {guided_velocity_vjp(*left_, state.left, t, c_left_, w_.left, cot.left),
          guided_velocity_vjp(*right_, state.right, t, c_right_, w_.right, cot.right)};
}

// The proxy is defined on the conditional fields, which coincide with the
// guided ones at w = 1.
double ComposedField::energy_proxy_given(const ArmPair& state, double t, const ArmPair& v) const {
  if (w_.left == 1.0 && w_.right == 1.0) return 0.5 * v.squared_norm();
  return energy_proxy(state, t);
}

JointField::JointField(const PolicyCheckpoint& joint, Conditioning c, double guidance)
    : joint_(&joint), c_(std::move(c)), guidance_(guidance), half_(joint.action_dim / 2) {
  if (joint.action_dim % 2 != 0) throw ShapeError("JointField: action dim must be even");
  left_norm_ = joint.normalizer.slice(0, half_);
  right_norm_ = joint.normalizer.slice(half_, half_);
}

ArmPair JointField::velocity(const ArmPair& state, double t) const {
  Vec a(2 * half_);
  a << state.left, state.right;
  const Vec v = guided_velocity(*joint_, a, t, c_, guidance_);
  return {v.head(half_), v.tail(half_)};
}

ArmPair JointField::velocity_vjp(const ArmPair& state, double t, const ArmPair& cot) const {
  Vec a(2 * half_), c(2 * half_);
  a << state.left, state.right;
  c << cot.left, cot.right;
  const Vec g = guided_velocity_vjp(*joint_, a, t, c_, guidance_, c);
  return {g.head(half_), g.tail(half_)};
}

FunctionField::FunctionField(int left_dim, int right_dim, Fn fn)
    : FunctionField(left_dim, right_dim, std::move(fn), Normalizer::identity(left_dim),
                    Normalizer::identity(right_dim)) {}

FunctionField::FunctionField(int left_dim, int right_dim, Fn fn, Normalizer left, Normalizer right)
    : fn_(std::move(fn)), left_norm_(std::move(left)), right_norm_(std::move(right)) {
  if (left_norm_.dim() != left_dim || right_norm_.dim() != right_dim)
    throw ShapeError("FunctionField: normalizer dims mismatch");
}

}  // namespace coordflow
