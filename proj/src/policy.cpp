#include "coordflow/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace coordflow {

Normalizer Normalizer::fit(std::span<const Vec> samples) {
  if (samples.empty()) throw std::invalid_argument("Normalizer::fit: no samples");
  const Eigen::Index d = samples.front().size();
  Vec mean = Vec::Zero(d);
  for (const auto& s : samples) {
    if (s.size() != d) throw ShapeError("Normalizer::fit: inconsistent sample dims");
    mean += s;
  }
  mean /= static_cast<double>(samples.size());
  Vec var = Vec::Zero(d);
  for (const auto& s : samples) var += (s - mean).cwiseAbs2();
  var /= static_cast<double>(samples.size());
  Vec sd = var.cwiseSqrt();
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(sd[i] > 1e-6)) sd[i] = 1.0;
  return {mean, sd};
}

Normalizer Normalizer::identity(Eigen::Index dim) { return {Vec::Zero(dim), Vec::Ones(dim)}; }

Conditioning Conditioning::null_like(const Conditioning& c) {
  Conditioning n;
  n.observation = Vec::Zero(c.observation.size());
  n.proprio = Vec::Zero(c.proprio.size());
  n.instruction = Vec::Zero(c.instruction.size());
  n.is_null = true;
  return n;
}

Vec Conditioning::encode() const {
  Vec out(dim());
  const auto no = observation.size(), np = proprio.size(), ni = instruction.size();
  if (is_null) {
    out.setZero();
    out[no + np + ni] = 1.0;
    return out;
  }
  out << observation, proprio, instruction, 0.0;
  return out;
}

void PolicyCheckpoint::validate() const {
  params.spec.validate();
  if (!params.conforms()) throw ShapeError("checkpoint: parameter shapes do not match spec");
  if (params.spec.input_dim != action_dim + cond_dim + 1)
    throw ShapeError("checkpoint: input_dim must equal action_dim + cond_dim + 1");
  if (params.spec.output_dim != action_dim) throw ShapeError("checkpoint: output_dim must equal action_dim");
  if (normalizer.dim() != action_dim) throw ShapeError("checkpoint: normalizer dim mismatch");
  if (cond_normalizer.dim() != cond_dim) throw ShapeError("checkpoint: conditioning normalizer dim mismatch");
}

Vec PolicyCheckpoint::cond_features(const Conditioning& c) const {
  const Vec e = c.encode();
  return c.is_null ? e : cond_normalizer.normalize(e);
}

PolicyCheckpoint zero_checkpoint(int action_dim, int cond_dim, std::vector<int> hidden) {
  PolicyCheckpoint ck;
  MlpSpec spec{action_dim + cond_dim + 1, std::move(hidden), action_dim, Activation::tanh};
  ck.params = Mlp::zeros(spec);
  ck.action_dim = action_dim;
  ck.cond_dim = cond_dim;
  ck.normalizer = Normalizer::identity(action_dim);
  ck.cond_normalizer = Normalizer::identity(cond_dim);
  return ck;
}

namespace {

Vec network_input(const Vec& a, double t, const Vec& cond) {
  Vec in(a.size() + 1 + cond.size());
  in << a, t, cond;
  return in;
}

}  // namespace

TrainReport train_flow_policy(std::span<const TrainingSample> demos, const FlowHyper& hyper) {
  if (demos.empty()) throw std::invalid_argument("train_flow_policy: no demonstrations");
  const auto action_dim = static_cast<int>(demos.front().action.size());
  const auto cond_dim = static_cast<int>(demos.front().cond.dim());
  for (const auto& d : demos) {
    if (d.action.size() != action_dim || d.cond.dim() != cond_dim)
      throw ShapeError("train_flow_policy: inconsistent demonstration dims");
    if (!d.action.allFinite()) throw NumericError("train_flow_policy: non-finite demo action");
  }
  if (hyper.epochs < 0) throw std::invalid_argument("train_flow_policy: epochs must be >= 0");

  Rng rng(hyper.seed);
  TrainReport report;
  auto& ck = report.checkpoint;
  ck.action_dim = action_dim;
  ck.cond_dim = cond_dim;
  ck.seed = hyper.seed;
  ck.epochs = hyper.epochs;
  {
    std::vector<Vec> actions;
    actions.reserve(demos.size());
    for (const auto& d : demos) actions.push_back(d.action);
    ck.normalizer = hyper.normalize_actions ? Normalizer::fit(actions) : Normalizer::identity(action_dim);
    std::vector<Vec> conds;
    conds.reserve(demos.size());
    for (const auto& d : demos)
      if (!d.cond.is_null) conds.push_back(d.cond.encode());
    ck.cond_normalizer = hyper.normalize_conditioning && !conds.empty() ? Normalizer::fit(conds)
                                                                         : Normalizer::identity(cond_dim);
  }
  MlpSpec spec{action_dim + cond_dim + 1, hyper.hidden_dims, action_dim, hyper.activation};
  ck.params = Mlp::glorot(spec, rng);

  const auto n = static_cast<Eigen::Index>(demos.size());
  Mat targets(action_dim, n), cond(cond_dim, n), null_cond(cond_dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    targets.col(i) = ck.normalizer.normalize(demos[i].action);
    cond.col(i) = ck.cond_features(demos[i].cond);
    null_cond.col(i) = Conditioning::null_like(demos[i].cond).encode();
  }

  const auto n_null = static_cast<Eigen::Index>(std::llround(hyper.p_uncond * static_cast<double>(n)));
  const Eigen::Index batch = hyper.batch_size > 0 ? std::min<Eigen::Index>(hyper.batch_size, n) : n;
  auto adam = AdamState<double>::fresh(spec);
  std::vector<Eigen::Index> order(n);
  std::vector<char> is_null(n);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    double lr = hyper.lr;
    if (hyper.lr_final > 0.0 && hyper.epochs > 1) {
      const double frac = static_cast<double>(epoch) / (hyper.epochs - 1);
      lr = hyper.lr_final + 0.5 * (hyper.lr - hyper.lr_final) * (1.0 + std::cos(std::numbers::pi * frac));
    }
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    // Fisher-Yates with the policy generator; first n_null entries are dropped.
    for (Eigen::Index i = n - 1; i > 0; --i) std::swap(order[i], order[rng.next() % static_cast<std::uint64_t>(i + 1)]);
    std::fill(is_null.begin(), is_null.end(), 0);
    for (Eigen::Index i = 0; i < n_null; ++i) is_null[order[i]] = 1;
    report.null_fraction.push_back(static_cast<double>(n_null) / static_cast<double>(n));
    if (batch < n)
      for (Eigen::Index i = n - 1; i > 0; --i) std::swap(order[i], order[rng.next() % static_cast<std::uint64_t>(i + 1)]);
    else
      std::iota(order.begin(), order.end(), Eigen::Index{0});

    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index b = std::min(batch, n - start);
      Mat input(spec.input_dim, b), target(action_dim, b);
      for (Eigen::Index k = 0; k < b; ++k) {
        const Eigen::Index i = order[start + k];
        const double t = rng.uniform();
        const Vec x0 = rng.normal_vec(action_dim);
        const Vec x1 = targets.col(i);
        input.col(k) << (1.0 - t) * x0 + t * x1, t, (is_null[i] ? null_cond.col(i) : cond.col(i));
        target.col(k) = x1 - x0;
      }
      const Mat out = mlp_forward_batch(ck.params, input);
      const Mat diff = out - target;
      const double loss = diff.squaredNorm() / static_cast<double>(b);
      if (!std::isfinite(loss))
        throw NumericError("train_flow_policy: loss became non-finite at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(b);
      const Mat grad = (2.0 / static_cast<double>(b)) * diff;
      const auto back = mlp_backward_batch(ck.params, input, grad);
      adam_step(ck.params, back.param_grads, adam, lr);
    }
    report.loss_curve.push_back(epoch_loss / static_cast<double>(n));
  }
  ck.final_loss = report.loss_curve.empty() ? 0.0 : report.loss_curve.back();
  return report;
}

TrainReport train_unimanual(std::span<const std::pair<Conditioning, ArmAction>> demos, const FlowHyper& hyper) {
  std::vector<TrainingSample> samples;
  samples.reserve(demos.size());
  for (const auto& [c, a] : demos) samples.push_back({c, a.v});
  return train_flow_policy(samples, hyper);
}

double flow_matching_loss(const std::function<Vec(const Vec&, double)>& field, const Vec& x0, const Vec& x1,
                          double t) {
  const Vec xt = (1.0 - t) * x0 + t * x1;
  return (field(xt, t) - (x1 - x0)).squaredNorm();
}

Vec velocity(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c) {
  if (a.size() != ckpt.action_dim) throw ShapeError("velocity: action dim mismatch");
  if (c.dim() != ckpt.cond_dim) throw ShapeError("velocity: conditioning dim mismatch");
  return mlp_forward(ckpt.params, network_input(a, t, ckpt.cond_features(c)));
}

Vec velocity_vjp(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c, const Vec& cot) {
  if (a.size() != ckpt.action_dim || cot.size() != ckpt.action_dim) throw ShapeError("velocity_vjp: dim mismatch");
  if (c.dim() != ckpt.cond_dim) throw ShapeError("velocity_vjp: conditioning dim mismatch");
  const auto back = mlp_backward(ckpt.params, network_input(a, t, ckpt.cond_features(c)), cot);
  return back.input_grad.head(ckpt.action_dim);
}

Vec guided_velocity_vjp(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c, double w,
                        const Vec& cot) {
  if (c.is_null) throw std::invalid_argument("guided_velocity_vjp: null conditioning");
  if (w == 1.0) return velocity_vjp(ckpt, a, t, c, cot);
  const Vec g_null = velocity_vjp(ckpt, a, t, Conditioning::null_like(c), cot);
  if (w == 0.0) return g_null;
  return (1.0 - w) * g_null + w * velocity_vjp(ckpt, a, t, c, cot);
}

Vec guided_velocity(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c, double w) {
  if (c.is_null) throw std::invalid_argument("guided_velocity: conditional branch given the null conditioning");
  if (w == 1.0) return velocity(ckpt, a, t, c);
  const Vec v_null = velocity(ckpt, a, t, Conditioning::null_like(c));
  if (w == 0.0) return v_null;
  const Vec v_cond = velocity(ckpt, a, t, c);
  return v_null + w * (v_cond - v_null);
}

double energy_proxy(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c) {
  return 0.5 * velocity(ckpt, a, t, c).squaredNorm();
}

Vec langevin_step(const VelocityFn& field, const Vec& a, double t, double eta, double noise_scale, Rng& rng) {
  if (!(eta > 0.0)) throw std::invalid_argument("langevin_step: eta must be positive");
  const Vec grad_energy = -field(a, t);
  Vec next = a - eta * grad_energy;
  if (noise_scale != 0.0) next += std::sqrt(2.0 * eta) * noise_scale * rng.normal_vec(a.size());
  return next;
}

Vec langevin_step(const PolicyCheckpoint& ckpt, const Vec& a, double t, const Conditioning& c, double eta,
                  double noise_scale, Rng& rng) {
  return langevin_step([&](const Vec& x, double tt) { return velocity(ckpt, x, tt, c); }, a, t, eta, noise_scale,
                       rng);
}

Vec euler_step(const VelocityFn& field, const Vec& a, double t, double dt) { return a + dt * field(a, t); }

FlowSample sample_flow(const PolicyCheckpoint& ckpt, const Conditioning& c, const Vec& x0, int steps,
                       double guidance) {
  if (steps < 1) throw std::invalid_argument("sample_flow: steps must be >= 1");
  FlowSample out;
  out.states.reserve(steps + 1);
  out.states.push_back(x0);
  const double dt = 1.0 / steps;
  Vec x = x0;
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    x = x + dt * guided_velocity(ckpt, x, t, c, guidance);
    out.states.push_back(x);
  }
  out.action = ckpt.normalizer.denormalize(x);
  return out;
}

FlowSample sample_flow(const PolicyCheckpoint& ckpt, const Conditioning& c, std::uint64_t seed, int steps,
                       double guidance) {
  return sample_flow(ckpt, c, seeded_normal(seed, ckpt.action_dim), steps, guidance);
}

}  // namespace coordflow
