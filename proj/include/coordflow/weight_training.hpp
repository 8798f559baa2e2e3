// Fitting the coordination weight predictor by imitation through the
// fixed-step denoising unroll, with the policy checkpoints frozen.
#pragma once

#include "coordflow/world.hpp"

#include <span>

namespace coordflow {

struct WeightTrainHyper {
  std::vector<int> hidden{32};
  double lr = 1e-2;
  int epochs = 20;
  int batch_size = 64;
  int max_samples = 0;  // subsample demo steps; 0 keeps all
  std::uint64_t seed = 0;
  SamplerConfig sampler;  // n_max, coordination mode and step
  CoordConfig coord;
};

struct WeightTrainReport {
  WeightNet net;
  std::vector<double> loss_curve;  // held-noise loss after each epoch
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int samples = 0;
  bool fallback_uniform = false;  // no demonstrations: initialization returned
};

/// One (history, conditioning, target) triple cut from a demonstration.
struct WeightSample {
  Conditioning left, right;
  PoseHistory history;
  BimanualAction target;
  std::uint64_t id = 0;  // selects the sample's noise stream
};
std::vector<WeightSample> weight_samples(std::span<const Demonstration> demos, const CoordConfig& coord);

/// Mean squared normalized distance between the unrolled sampler output and
/// the demo action, averaged over the samples with per-sample noise seeds.
double weight_loss(const WeightNet& wn, std::span<const WeightSample> samples, const PolicyCheckpoint& left,
                   const PolicyCheckpoint& right, const WeightTrainHyper& hyper, std::uint64_t noise_seed);

/// Gradient of weight_loss. Energy Hessians and the dependence of the
/// accepted line-search step on the weights are dropped.
Mlp weight_loss_grad(const WeightNet& wn, std::span<const WeightSample> samples, const PolicyCheckpoint& left,
                     const PolicyCheckpoint& right, const WeightTrainHyper& hyper, std::uint64_t noise_seed,
                     double* loss = nullptr);

/// Adam on weight_loss with fresh noise each epoch; returns the parameters
/// with the lowest held-noise loss seen (the initialization included).
WeightTrainReport train_weight_net(std::span<const Demonstration> demos, const PolicyCheckpoint& left,
                                   const PolicyCheckpoint& right, const WeightTrainHyper& hyper);

/// E_total at t = 0 for one noise draw per demonstration step, under the full
/// coordination configuration of the demo's task (matched by id, then kind).
/// This is the energy the adaptive budget is computed from.
std::vector<double> initial_energies(std::span<const Demonstration> demos, std::span<const TaskSpec> tasks,
                                     const PolicyCheckpoint& left, const PolicyCheckpoint& right,
                                     const WeightNet* wn, const SamplerConfig& sampler, std::uint64_t seed);

}  // namespace coordflow
