// Dense substrate: seeded random numbers, a small feed-forward network with
// reverse-mode gradients, and the Adam optimizer.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace coordflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces NaN/Inf where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// SplitMix64 step. Used to expand a 64-bit seed into generator state and to
/// derive independent child seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Child seed for stream `stream` of `master`. Stable across platforms:
/// splitmix64 applied to master XOR (stream * golden-ratio constant).
std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream);

/// xoshiro256** generator with Box-Muller normals.
///
/// The state is seeded by four successive splitmix64 outputs of the seed.
/// `uniform()` returns (next() >> 11) * 2^-53 in [0, 1). `normal()` draws two
/// uniforms u1, u2, forms r = sqrt(-2 ln(1 - u1)), and returns r cos(2 pi u2)
/// followed, on the next call, by r sin(2 pi u2).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  double normal();
  Vec normal_vec(Eigen::Index n);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// n standard-normal draws from a fresh generator seeded with `seed`.
Vec seeded_normal(std::uint64_t seed, Eigen::Index n);

// ---------------------------------------------------------------------------
// Feed-forward network
// ---------------------------------------------------------------------------

enum class Activation { tanh, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims{1};
  int output_dim = 1;
  Activation activation = Activation::tanh;

  void validate() const;
  int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
  int layer_in(int l) const { return l == 0 ? input_dim : hidden_dims[l - 1]; }
  int layer_out(int l) const { return l == num_layers() - 1 ? output_dim : hidden_dims[l]; }
  bool operator==(const MlpSpec&) const = default;
};

/// Weights and biases of an MlpSpec network. Layer l maps layer_in(l) to
/// layer_out(l); weights[l] is (out x in). The same type doubles as the
/// gradient container.
template <typename Scalar>
struct MlpParams {
  MlpSpec spec;
  std::vector<MatrixX<Scalar>> weights;
  std::vector<VectorX<Scalar>> biases;

  static MlpParams zeros(const MlpSpec& spec) {
    spec.validate();
    MlpParams p;
    p.spec = spec;
    for (int l = 0; l < spec.num_layers(); ++l) {
      p.weights.push_back(MatrixX<Scalar>::Zero(spec.layer_out(l), spec.layer_in(l)));
      p.biases.push_back(VectorX<Scalar>::Zero(spec.layer_out(l)));
    }
    return p;
  }

  /// Glorot-uniform weights, zero biases.
  static MlpParams glorot(const MlpSpec& spec, Rng& rng) {
    MlpParams p = zeros(spec);
    for (int l = 0; l < spec.num_layers(); ++l) {
      const double limit = std::sqrt(6.0 / (spec.layer_in(l) + spec.layer_out(l)));
      auto& w = p.weights[l];
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = Scalar(rng.uniform(-limit, limit));
    }
    return p;
  }

  Eigen::Index num_params() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  /// Flat view in layer order: weights row-major, then biases.
  VectorX<Scalar> flatten() const {
    VectorX<Scalar> out(num_params());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r)
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) out[k++] = weights[l](r, c);
      for (Eigen::Index i = 0; i < biases[l].size(); ++i) out[k++] = biases[l][i];
    }
    return out;
  }

  void unflatten(const VectorX<Scalar>& flat) {
    if (flat.size() != num_params()) throw ShapeError("flat parameter vector has wrong length");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r)
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) weights[l](r, c) = flat[k++];
      for (Eigen::Index i = 0; i < biases[l].size(); ++i) biases[l][i] = flat[k++];
    }
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  /// Shapes conform to spec exactly.
  bool conforms() const {
    if (static_cast<int>(weights.size()) != spec.num_layers() || biases.size() != weights.size()) return false;
    for (int l = 0; l < spec.num_layers(); ++l) {
      if (weights[l].rows() != spec.layer_out(l) || weights[l].cols() != spec.layer_in(l)) return false;
      if (biases[l].size() != spec.layer_out(l)) return false;
    }
    return true;
  }
};

using Mlp = MlpParams<double>;

namespace detail {

template <typename Derived>
void activate_inplace(Eigen::MatrixBase<Derived>& z, Activation a) {
  if (a == Activation::tanh)
    z = z.array().tanh().matrix();
  else
    z = z.array().max(typename Derived::Scalar(0)).matrix();
}

// Derivative expressed through the post-activation value h (and pre-activation z for relu).
template <typename Derived>
auto activation_slope(const Eigen::MatrixBase<Derived>& h, Activation a) {
  using Scalar = typename Derived::Scalar;
  using Plain = typename Derived::PlainObject;
  if (a == Activation::tanh) return Plain((Scalar(1) - h.array().square()).matrix());
  return Plain((h.array() > Scalar(0)).template cast<Scalar>().matrix());
}

}  // namespace detail

template <typename Scalar>
VectorX<Scalar> mlp_forward(const MlpParams<Scalar>& p, const VectorX<Scalar>& input) {
  if (input.size() != p.spec.input_dim)
    throw ShapeError("mlp_forward: input has dim " + std::to_string(input.size()) + ", network expects " +
                     std::to_string(p.spec.input_dim));
  VectorX<Scalar> h = input;
  const int L = p.spec.num_layers();
  for (int l = 0; l < L; ++l) {
    VectorX<Scalar> z = p.weights[l] * h + p.biases[l];
    if (l + 1 < L) detail::activate_inplace(z, p.spec.activation);
    h = std::move(z);
  }
  return h;
}

/// Column-batched forward pass; each column of `inputs` is one sample.
template <typename Scalar>
MatrixX<Scalar> mlp_forward_batch(const MlpParams<Scalar>& p, const MatrixX<Scalar>& inputs) {
  if (inputs.rows() != p.spec.input_dim) throw ShapeError("mlp_forward_batch: input row count mismatch");
  MatrixX<Scalar> h = inputs;
  const int L = p.spec.num_layers();
  for (int l = 0; l < L; ++l) {
    MatrixX<Scalar> z = p.weights[l] * h;
    z.colwise() += p.biases[l];
    if (l + 1 < L) detail::activate_inplace(z, p.spec.activation);
    h = std::move(z);
  }
  return h;
}

template <typename Scalar>
struct MlpBackward {
  MlpParams<Scalar> param_grads;
  VectorX<Scalar> input_grad;
};

/// Exact reverse-mode gradients of <output_grad, mlp_forward(p, input)>.
template <typename Scalar>
MlpBackward<Scalar> mlp_backward(const MlpParams<Scalar>& p, const VectorX<Scalar>& input,
                                 const VectorX<Scalar>& output_grad) {
  if (input.size() != p.spec.input_dim) throw ShapeError("mlp_backward: input dim mismatch");
  if (output_grad.size() != p.spec.output_dim) throw ShapeError("mlp_backward: output_grad dim mismatch");
  const int L = p.spec.num_layers();
  std::vector<VectorX<Scalar>> acts;
  acts.reserve(L);
  acts.push_back(input);
  for (int l = 0; l + 1 < L; ++l) {
    VectorX<Scalar> z = p.weights[l] * acts.back() + p.biases[l];
    detail::activate_inplace(z, p.spec.activation);
    acts.push_back(std::move(z));
  }
  MlpBackward<Scalar> out{MlpParams<Scalar>::zeros(p.spec), {}};
  VectorX<Scalar> delta = output_grad;
  for (int l = L - 1; l >= 0; --l) {
    out.param_grads.weights[l].noalias() = delta * acts[l].transpose();
    out.param_grads.biases[l] = delta;
    VectorX<Scalar> back = p.weights[l].transpose() * delta;
    if (l > 0) back.array() *= detail::activation_slope(acts[l], p.spec.activation).array();
    delta = std::move(back);
  }
  out.input_grad = std::move(delta);
  return out;
}

template <typename Scalar>
struct MlpBackwardBatch {
  MlpParams<Scalar> param_grads;  // summed over the batch
  MatrixX<Scalar> input_grads;    // one column per sample
};

template <typename Scalar>
MlpBackwardBatch<Scalar> mlp_backward_batch(const MlpParams<Scalar>& p, const MatrixX<Scalar>& inputs,
                                            const MatrixX<Scalar>& output_grads) {
  if (inputs.rows() != p.spec.input_dim || output_grads.rows() != p.spec.output_dim ||
      inputs.cols() != output_grads.cols())
    throw ShapeError("mlp_backward_batch: shape mismatch");
  const int L = p.spec.num_layers();
  std::vector<MatrixX<Scalar>> acts;
  acts.reserve(L);
  acts.push_back(inputs);
  for (int l = 0; l + 1 < L; ++l) {
    MatrixX<Scalar> z = p.weights[l] * acts.back();
    z.colwise() += p.biases[l];
    detail::activate_inplace(z, p.spec.activation);
    acts.push_back(std::move(z));
  }
  MlpBackwardBatch<Scalar> out{MlpParams<Scalar>::zeros(p.spec), {}};
  MatrixX<Scalar> delta = output_grads;
  for (int l = L - 1; l >= 0; --l) {
    out.param_grads.weights[l].noalias() = delta * acts[l].transpose();
    out.param_grads.biases[l] = delta.rowwise().sum();
    MatrixX<Scalar> back = p.weights[l].transpose() * delta;
    if (l > 0) back.array() *= detail::activation_slope(acts[l], p.spec.activation).array();
    delta = std::move(back);
  }
  out.input_grads = std::move(delta);
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  MlpParams<Scalar> m;
  MlpParams<Scalar> v;
  long step = 0;

  static AdamState fresh(const MlpSpec& spec) {
    return AdamState{MlpParams<Scalar>::zeros(spec), MlpParams<Scalar>::zeros(spec), 0};
  }
};

/// One bias-corrected Adam update, in place. Throws NumericError on non-finite
/// gradients before touching params or state.
template <typename Scalar>
void adam_step(MlpParams<Scalar>& params, const MlpParams<Scalar>& grads, AdamState<Scalar>& state, double lr,
               const AdamConfig& cfg = {}) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (!grads.conforms() || grads.spec != params.spec || state.m.spec != params.spec)
    throw ShapeError("adam_step: gradient/state shapes do not match parameters");
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient; training aborted");
  state.step += 1;
  const Scalar b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
  const Scalar c1 = Scalar(1) - Scalar(std::pow(cfg.beta1, static_cast<double>(state.step)));
  const Scalar c2 = Scalar(1) - Scalar(std::pow(cfg.beta2, static_cast<double>(state.step)));
  const Scalar eps = Scalar(cfg.eps), rate = Scalar(lr);
  auto update = [&](auto& x, const auto& g, auto& m, auto& v) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    x.array() -= rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(params.weights[l], grads.weights[l], state.m.weights[l], state.v.weights[l]);
    update(params.biases[l], grads.biases[l], state.m.biases[l], state.v.biases[l]);
  }
}

/// Numerically stable softmax.
Vec softmax(const Vec& logits);

/// Angle wrapped to (-pi, pi].
double wrap_angle(double a);

}  // namespace coordflow
