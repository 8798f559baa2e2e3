// Two unimanual policies fused into one bimanual velocity field.
#pragma once

#include "coordflow/policy.hpp"

#include <memory>

namespace coordflow {

struct BimanualAction {
  ArmAction left;
  ArmAction right;

  bool all_finite() const { return left.all_finite() && right.all_finite(); }
};

struct GuidanceWeights {
  double left = 1.0;
  double right = 1.0;
};

/// Per-arm vectors in the flow's (normalized) coordinates.
struct ArmPair {
  Vec left;
  Vec right;

  ArmPair operator+(const ArmPair& o) const { return {left + o.left, right + o.right}; }
  ArmPair operator-(const ArmPair& o) const { return {left - o.left, right - o.right}; }
  ArmPair operator*(double s) const { return {left * s, right * s}; }
  double squared_norm() const { return left.squaredNorm() + right.squaredNorm(); }
  bool all_finite() const { return left.allFinite() && right.allFinite(); }
};

/// Per arm: v_null + w (v_cond - v_null). The unconditional bimanual field is
/// the concatenation of the per-arm unconditional fields, so the result has no
/// cross-arm terms. Null conditionings are rejected.
ArmPair comp_velocity(const PolicyCheckpoint& left_ckpt, const PolicyCheckpoint& right_ckpt, const ArmPair& a,
                      double t, const Conditioning& c_left, const Conditioning& c_right, const GuidanceWeights& w);

/// Sum of the two unimanual energy proxies.
double comp_energy_proxy(const PolicyCheckpoint& left_ckpt, const PolicyCheckpoint& right_ckpt, const ArmPair& a,
                         double t, const Conditioning& c_left, const Conditioning& c_right);

/// Generative part of the bimanual sampler with its conditioning bound.
/// States live in normalized coordinates; to_physical/to_normalized map
/// per-arm vectors to and from physical action units.
class BimanualField {
 public:
  virtual ~BimanualField() = default;

  virtual ArmPair velocity(const ArmPair& state, double t) const = 0;
  /// 1/2 |v|^2 summed over arms.
  virtual double energy_proxy(const ArmPair& state, double t) const;
  /// Same value when the sampler already holds v = velocity(state, t).
  virtual double energy_proxy_given(const ArmPair& state, double t, const ArmPair& v) const;
  /// cot^T dv/dstate; fields without a network Jacobian throw.
  virtual ArmPair velocity_vjp(const ArmPair& state, double t, const ArmPair& cot) const;
  virtual int left_dim() const = 0;
  virtual int right_dim() const = 0;
  virtual const Normalizer& left_normalizer() const = 0;
  virtual const Normalizer& right_normalizer() const = 0;

  BimanualAction to_physical(const ArmPair& state) const;
  ArmPair to_normalized(const BimanualAction& a) const;
};

/// Composition of two unimanual checkpoints.
class ComposedField final : public BimanualField {
 public:
  ComposedField(const PolicyCheckpoint& left, const PolicyCheckpoint& right, Conditioning c_left,
                Conditioning c_right, GuidanceWeights w = {});

  ArmPair velocity(const ArmPair& state, double t) const override;
  double energy_proxy(const ArmPair& state, double t) const override;
  double energy_proxy_given(const ArmPair& state, double t, const ArmPair& v) const override;
  ArmPair velocity_vjp(const ArmPair& state, double t, const ArmPair& cot) const override;
  int left_dim() const override { return left_->action_dim; }
  int right_dim() const override { return right_->action_dim; }
  const Normalizer& left_normalizer() const override { return left_->normalizer; }
  const Normalizer& right_normalizer() const override { return right_->normalizer; }

 private:
  const PolicyCheckpoint* left_;
  const PolicyCheckpoint* right_;
  Conditioning c_left_, c_right_;
  GuidanceWeights w_;
};

/// A single checkpoint over the concatenated (left, right) action.
class JointField final : public BimanualField {
 public:
  JointField(const PolicyCheckpoint& joint, Conditioning c, double guidance = 1.0);

  ArmPair velocity(const ArmPair& state, double t) const override;
  ArmPair velocity_vjp(const ArmPair& state, double t, const ArmPair& cot) const override;
  int left_dim() const override { return half_; }
  int right_dim() const override { return half_; }
  const Normalizer& left_normalizer() const override { return left_norm_; }
  const Normalizer& right_normalizer() const override { return right_norm_; }

 private:
  const PolicyCheckpoint* joint_;
  Conditioning c_;
  double guidance_;
  int half_;
  Normalizer left_norm_, right_norm_;
};

/// Analytic field given as a callable; identity normalizers.
class FunctionField final : public BimanualField {
 public:
  using Fn = std::function<ArmPair(const ArmPair&, double)>;
  FunctionField(int left_dim, int right_dim, Fn fn);
  FunctionField(int left_dim, int right_dim, Fn fn, Normalizer left, Normalizer right);

  ArmPair velocity(const ArmPair& state, double t) const override { return fn_(state, t); }
  int left_dim() const override { return static_cast<int>(left_norm_.dim()); }
  int right_dim() const override { return static_cast<int>(right_norm_.dim()); }
  const Normalizer& left_normalizer() const override { return left_norm_; }
  const Normalizer& right_normalizer() const override { return right_norm_; }

 private:
  Fn fn_;
  Normalizer left_norm_, right_norm_;
};

}  // namespace coordflow
