#include "coordflow/weight_training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coordflow {

std::vector<WeightSample> weight_samples(std::span<const Demonstration> demos, const CoordConfig& coord) {
  std::vector<WeightSample> out;
  const JointConfig elbow_seed{0.0, 1.0};
  for (const auto& d : demos) {
    JointConfig jl = inverse_kin_projected(coord.left_geom, d.initial.left.xy(), elbow_seed).joints;
    JointConfig jr = inverse_kin_projected(coord.right_geom, d.initial.right.xy(), elbow_seed).joints;
    PoseHistory h = PoseHistory::constant(d.initial, jl, jr);
    for (const auto& step : d.steps) {
      out.push_back({step.left, step.right, h, step.action, static_cast<std::uint64_t>(out.size())});
      jl = inverse_kin_projected(coord.left_geom, step.action.left.xy(), h.joints_left).joints;
      jr = inverse_kin_projected(coord.right_geom, step.action.right.xy(), h.joints_right).joints;
      h.push(step.action, jl, jr);
    }
  }
  return out;
}

namespace {

void add_scaled(Mlp& acc, const Mlp& g, double s) {
  for (std::size_t l = 0; l < acc.weights.size(); ++l) {
    acc.weights[l] += s * g.weights[l];
    acc.biases[l] += s * g.biases[l];
  }
}

struct Frame {
  ArmPair z;
  double t;
  double alpha;  // coefficient of sum_i w_i g_i in the state increment
  TermArray w;
  std::array<ActionGrad, kNumTerms> g;
  Vec input;
};

// Unrolls the fixed-step sampler for one sample. With `grad` set, adds
// `scale` * dLoss/dparams.
double unroll(const WeightNet& wn, const WeightSample& s, const PolicyCheckpoint& left, const PolicyCheckpoint& right,
              const WeightTrainHyper& hyper, std::uint64_t noise_seed, Mlp* grad, double scale) {
  const ComposedField field(left, right, s.left, s.right, hyper.sampler.guidance);
  const Vec& sl = field.left_normalizer().std;
  const Vec& sr = field.right_normalizer().std;
  const int n = hyper.sampler.n_max;
  const double dt = 1.0 / n;
  const bool clean = hyper.sampler.coord_mode == CoordMode::clean_descent;
  const bool coord = hyper.coord.any_enabled();

  Rng rng(split_seed(noise_seed, s.id));
  ArmPair z{rng.normal_vec(field.left_dim()), rng.normal_vec(field.right_dim())};
  std::vector<Frame> frames;
  frames.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / n;
    const ArmPair v = field.velocity(z, t);
    Frame f{z, t, 0.0, {}, {}, {}};
    ArmPair step = v;
    if (coord) {
      if (clean) {
        const BimanualAction x = field.to_physical(z + v * (1.0 - t));
        const CoordDescent d = coordination_descent(x, s.history, &wn, hyper.coord, hyper.sampler.coord_step);
        f.w = d.before.weights;
        f.g = d.term_grads;
        f.alpha = -d.step / (1.0 - t);
        f.input = weight_net_input(x, s.history);
        step.left += (d.delta.left.array() / sl.array()).matrix() / (1.0 - t);
        step.right += (d.delta.right.array() / sr.array()).matrix() / (1.0 - t);
      } else {
        const BimanualAction x = field.to_physical(z);
        f.w = predict_weights(wn, x, s.history);
        f.g = term_gradients(x, s.history, hyper.coord);
        f.alpha = -1.0;
        f.input = weight_net_input(x, s.history);
        ActionGrad total;
        for (int i = 0; i < kNumTerms; ++i) total += f.g[i] * f.w[i];
        step.left -= (total.left.array() * sl.array()).matrix();
        step.right -= (total.right.array() * sr.array()).matrix();
      }
    }
    frames.push_back(std::move(f));
    z = z + step * dt;
  }
  const ArmPair target = field.to_normalized(s.target);
  const ArmPair err = z - target;
  const double loss = err.squared_norm();
  if (!grad || !coord) return loss;

  ArmPair cot = err * 2.0;
  for (int k = n - 1; k >= 0; --k) {
    const Frame& f = frames[k];
    if (f.alpha != 0.0) {
      // d z_{k+1} / d w_i = dt * alpha * (g_i mapped to normalized units)
      Vec dw(kNumTerms);
      for (int i = 0; i < kNumTerms; ++i) {
        Vec gl, gr;
        if (clean) {
          gl = (f.g[i].left.array() / sl.array()).matrix();
          gr = (f.g[i].right.array() / sr.array()).matrix();
        } else {
          gl = (f.g[i].left.array() * sl.array()).matrix();
          gr = (f.g[i].right.array() * sr.array()).matrix();
        }
        dw[i] = dt * f.alpha * (cot.left.dot(gl) + cot.right.dot(gr));
      }
      Vec w(kNumTerms);
      for (int i = 0; i < kNumTerms; ++i) w[i] = f.w[i];
      const Vec dlogits = (w.array() * (dw.array() - w.dot(dw))).matrix();
      add_scaled(*grad, mlp_backward(wn.params, f.input, dlogits).param_grads, scale);
    }
    if (k > 0) cot = cot + field.velocity_vjp(f.z, f.t, cot) * dt;
  }
  return loss;
}

}  // namespace

double weight_loss(const WeightNet& wn, std::span<const WeightSample> samples, const PolicyCheckpoint& left,
                   const PolicyCheckpoint& right, const WeightTrainHyper& hyper, std::uint64_t noise_seed) {
  if (samples.empty()) throw std::invalid_argument("weight_loss: no samples");
  double total = 0.0;
  for (const auto& s : samples) total += unroll(wn, s, left, right, hyper, noise_seed, nullptr, 0.0);
  return total / static_cast<double>(samples.size());
}

Mlp weight_loss_grad(const WeightNet& wn, std::span<const WeightSample> samples, const PolicyCheckpoint& left,
                     const PolicyCheckpoint& right, const WeightTrainHyper& hyper, std::uint64_t noise_seed,
                     double* loss) {
  if (samples.empty()) throw std::invalid_argument("weight_loss_grad: no samples");
  Mlp grad = Mlp::zeros(wn.params.spec);
  const double scale = 1.0 / static_cast<double>(samples.size());
  double total = 0.0;
  for (const auto& s : samples) total += unroll(wn, s, left, right, hyper, noise_seed, &grad, scale);
  if (loss) *loss = total * scale;
  return grad;
}

WeightTrainReport train_weight_net(std::span<const Demonstration> demos, const PolicyCheckpoint& left,
                                   const PolicyCheckpoint& right, const WeightTrainHyper& hyper) {
  WeightTrainReport rep;
  rep.net = WeightNet::initial(hyper.hidden, hyper.seed);
  if (demos.empty()) {
    rep.fallback_uniform = true;
    return rep;
  }
  if (hyper.epochs < 0 || hyper.batch_size < 1) throw std::invalid_argument("train_weight_net: bad hyperparameters");
  hyper.sampler.validate();
  std::vector<WeightSample> samples = weight_samples(demos, hyper.coord);
  Rng rng(split_seed(hyper.seed, 1));
  if (hyper.max_samples > 0 && static_cast<int>(samples.size()) > hyper.max_samples) {
    for (std::size_t i = samples.size() - 1; i > 0; --i) std::swap(samples[i], samples[rng.next() % (i + 1)]);
    samples.resize(hyper.max_samples);
  }
  rep.samples = static_cast<int>(samples.size());

  const std::uint64_t held_seed = split_seed(hyper.seed, 2);
  rep.initial_loss = weight_loss(rep.net, samples, left, right, hyper, held_seed);
  if (!std::isfinite(rep.initial_loss)) throw NumericError("train_weight_net: non-finite initial loss");
  rep.final_loss = rep.initial_loss;
  WeightNet net = rep.net;
  auto adam = AdamState<double>::fresh(net.params.spec);
  std::vector<std::size_t> order(samples.size());
  std::vector<WeightSample> batch;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.next() % (i + 1)]);
    const std::uint64_t epoch_seed = split_seed(hyper.seed, 100 + static_cast<std::uint64_t>(epoch));
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + hyper.batch_size); ++k)
        batch.push_back(samples[order[k]]);
      double loss = 0.0;
      const Mlp g = weight_loss_grad(net, batch, left, right, hyper, epoch_seed, &loss);
      if (!std::isfinite(loss))
        throw NumericError("train_weight_net: loss diverged at epoch " + std::to_string(epoch));
      adam_step(net.params, g, adam, hyper.lr);
    }
    const double held = weight_loss(net, samples, left, right, hyper, held_seed);
    if (!std::isfinite(held)) throw NumericError("train_weight_net: loss diverged at epoch " + std::to_string(epoch));
    rep.loss_curve.push_back(held);
    if (held < rep.final_loss) {
      rep.final_loss = held;
      rep.net = net;
    }
  }
  return rep;
}

std::vector<double> initial_energies(std::span<const Demonstration> demos, std::span<const TaskSpec> tasks,
                                     const PolicyCheckpoint& left, const PolicyCheckpoint& right,
                                     const WeightNet* wn, const SamplerConfig& sampler, std::uint64_t seed) {
  auto find_task = [&](const std::string& name) -> const TaskSpec& {
    for (const auto& t : tasks)
      if (t.id == name) return t;
    for (const auto& t : tasks)
      if (to_string(t.kind) == name) return t;
    throw std::invalid_argument("initial_energies: demonstration of unknown task '" + name + "'");
  };
  std::vector<double> out;
  std::uint64_t k = 0;
  for (const auto& d : demos) {
    const TaskSpec& task = find_task(d.task);
    const CoordConfig coord = task_coord_config(task, Ablation{});
    const Demonstration one[] = {d};
    for (const auto& s : weight_samples(one, coord)) {
      const ComposedField field(left, right, s.left, s.right, sampler.guidance);
      SamplerContext ctx;
      ctx.field = &field;
      ctx.history = &s.history;
      ctx.weights = wn;
      ctx.coord = coord;
      SamplerConfig sc = sampler;
      sc.seed = split_seed(seed, k++);
      out.push_back(evaluate_field(initial_noise(ctx, sc), 0.0, ctx, sc).energy.e_total);
    }
  }
  return out;
}

}  // namespace coordflow
