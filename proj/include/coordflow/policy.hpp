// Unimanual flow-matching policy: training, velocity field, energy proxy and
// the Langevin sampler used to check the energy interpretation.
#pragma once

#include "coordflow/kinematics.hpp"
#include "coordflow/numerics.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace coordflow {

/// Per-coordinate affine map between physical and normalized action space.
struct Normalizer {
  Vec mean;
  Vec std;

  /// Zero mean / unit variance over the samples; coordinates with spread
  /// below 1e-6 keep their mean and get unit scale.
  static Normalizer fit(std::span<const Vec> samples);
  static Normalizer identity(Eigen::Index dim);

  Eigen::Index dim() const { return mean.size(); }
  Vec normalize(const Vec& x) const { return ((x - mean).array() / std.array()).matrix(); }
  Vec denormalize(const Vec& z) const { return (z.array() * std.array()).matrix() + mean; }
  Normalizer slice(Eigen::Index start, Eigen::Index n) const { return {mean.segment(start, n), std.segment(start, n)}; }
};

/// c = (observation, proprio, instruction). The null variant encodes as all
/// zeros with the trailing null-flag channel set to 1.
struct Conditioning {
  Vec observation;
  Vec proprio;
  Vec instruction;
  bool is_null = false;

  static Conditioning null_like(const Conditioning& c);

  Eigen::Index dim() const { return observation.size() + proprio.size() + instruction.size() + 1; }
  Vec encode() const;
};

struct PolicyCheckpoint {
  Mlp params;
  int action_dim = 0;
  int cond_dim = 0;
  Normalizer normalizer;       // actions
  Normalizer cond_normalizer;  // encoded conditioning; the null encoding bypasses it
  std::uint64_t seed = 0;
  int epochs = 0;
  double final_loss = 0.0;

  const MlpSpec& spec() const { return params.spec; }
  /// Network-side conditioning features.
  Vec cond_features(const Conditioning& c) const;
  /// Checks the input/output layout invariants.
  void validate() const;
};

/// A network with all-zero weights and biases (velocity identically zero).
PolicyCheckpoint zero_checkpoint(int action_dim, int cond_dim, std::vector<int> hidden = {8});

struct FlowHyper {
  std::vector<int> hidden_dims{128, 128};
  Activation activation = Activation::tanh;
  double lr = 1e-3;
  double lr_final = 0.0;  // > 0: cosine decay from lr to lr_final over the epochs
  int epochs = 2000;
  int batch_size = 0;  // 0 = full dataset
  double p_uncond = 0.1;
  bool normalize_actions = true;
  bool normalize_conditioning = true;
  std::uint64_t seed = 0;
};

struct TrainingSample {
  Conditioning cond;
  Vec action;  // physical units
};

struct TrainReport {
  PolicyCheckpoint checkpoint;
  std::vector<double> loss_curve;       // one entry per epoch
  std::vector<double> null_fraction;    // realized dropout fraction per epoch
};

/// Rectified-flow regression: minimizes E|v(X_t, t, c) - (X_1 - X_0)|^2 with
/// X_t = (1 - t) X_0 + t X_1, X_0 ~ N(0, I), t ~ U[0, 1], and exactly
/// round(p_uncond * N) samples per epoch given the null conditioning.
TrainReport train_flow_policy(std::span<const TrainingSample> demos, const FlowHyper& hyper);

/// Convenience wrapper for 7-dim arm actions.
TrainReport train_unimanual(std::span<const std::pair<Conditioning, ArmAction>> demos, const FlowHyper& hyper);

/// Flow-matching loss of an arbitrary field on one (X_0, X_1, t) triple.
double flow_matching_loss(const std::function<Vec(const Vec&, double)>& field, const Vec& x0, const Vec& x1, double t);

/// v_theta(a, t, c) with `a` in normalized action coordinates.
Vec velocity(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c);

/// Vector-Jacobian product cot^T dv/da of the network field.
Vec velocity_vjp(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c, const Vec& cot);

/// Classifier-free guided field v_null + w (v_cond - v_null); w == 1 returns
/// the conditional field directly.
Vec guided_velocity(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c, double w);

/// cot^T d(guided velocity)/da.
Vec guided_velocity_vjp(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c, double w,
                        const Vec& cot);

/// 1/2 |v_theta(a, t, c)|^2. Zero exactly where the field vanishes.
double energy_proxy(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c);

using VelocityFn = std::function<Vec(const Vec& a, double t)>;

/// a - eta * grad E + sqrt(2 eta) * noise_scale * eps, with grad E := -v(a, t).
Vec langevin_step(const VelocityFn& field, const Vec& a, double t, double eta, double noise_scale, Rng& rng);
Vec langevin_step(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c, double eta,
                  double noise_scale, Rng& rng);

/// X_{t + dt} = X_t + dt * v(X_t, t).
Vec euler_step(const VelocityFn& field, const Vec& a, double t, double dt);

struct FlowSample {
  std::vector<Vec> states;  // X_0 .. X_N, normalized coordinates
  Vec action;               // physical units
};

FlowSample sample_flow(const PolicyCheckpoint& ckpt, const Conditioning& c, const Vec& x0, int steps,
                       double guidance = 1.0);
FlowSample sample_flow(const PolicyCheckpoint& ckpt, const Conditioning& c, std::uint64_t seed, int steps,
                       double guidance = 1.0);

}  // namespace coordflow
