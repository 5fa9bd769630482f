#include "mmfusion/neural.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "mmfusion/error.hpp"

namespace mmf {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::tanh, Activation::relu, Activation::sigmoid, Activation::linear}) {
    if (activation_name(a) == name) return a;
  }
  throw ModelError(fmt::format("unknown activation '{}'", name));
}

void LayerSpec::validate() const {
  if (fan_in < 1 || fan_out < 1) {
    throw ModelError(fmt::format("layer {}x{}: unit counts must be >= 1", fan_in, fan_out));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ModelError(fmt::format("dropout rate {} outside [0, 1)", dropout_rate));
  }
}

double glorot_stddev(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

DenseLayer glorot_init(const LayerSpec& spec, Rng& rng) {
  spec.validate();
  const auto in = static_cast<Eigen::Index>(spec.fan_in);
  const auto out = static_cast<Eigen::Index>(spec.fan_out);
  std::normal_distribution<double> normal(0.0, glorot_stddev(spec.fan_in, spec.fan_out));

  DenseLayer layer;
  layer.spec = spec;
  layer.weights.resize(in, out);
  // Fill row by row so the draw order does not depend on Eigen's storage order.
  for (Eigen::Index i = 0; i < in; ++i) {
    for (Eigen::Index j = 0; j < out; ++j) layer.weights(i, j) = normal(rng);
  }
  layer.bias = RowVector::Zero(out);
  if (spec.batch_norm) {
    layer.gamma = RowVector::Ones(out);
    layer.beta = RowVector::Zero(out);
    layer.running_mean = RowVector::Zero(out);
    layer.running_var = RowVector::Ones(out);
  }
  return layer;
}

RowVector dropout_mask(double rate, std::size_t width, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ModelError(fmt::format("dropout rate {} outside [0, 1)", rate));
  }
  RowVector mask = RowVector::Ones(static_cast<Eigen::Index>(width));
  if (rate == 0.0) return mask;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < mask.size(); ++j) mask(j) = keep(rng) ? scale : 0.0;
  return mask;
}

namespace {

Matrix activate(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    case Activation::linear: return z;
  }
  return z;
}

// Derivative expressed through the pre-activation and the activation output.
Matrix activation_derivative(Activation a, const Matrix& pre, const Matrix& post) {
  switch (a) {
    case Activation::tanh: return (1.0 - post.array().square()).matrix();
    case Activation::relu: return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::sigmoid: return (post.array() * (1.0 - post.array())).matrix();
    case Activation::linear: return Matrix::Ones(pre.rows(), pre.cols());
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

}  // namespace

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    layer.spec.validate();
    if (i > 0 && layer.spec.fan_in != layers_[i - 1].spec.fan_out) {
      throw ModelError(fmt::format("layer {}: fan_in {} does not match previous fan_out {}", i,
                                   layer.spec.fan_in, layers_[i - 1].spec.fan_out));
    }
    const auto in = static_cast<Eigen::Index>(layer.spec.fan_in);
    const auto out = static_cast<Eigen::Index>(layer.spec.fan_out);
    bool ok = layer.weights.rows() == in && layer.weights.cols() == out && layer.bias.size() == out;
    if (layer.spec.batch_norm) {
      ok = ok && layer.gamma.size() == out && layer.beta.size() == out &&
           layer.running_mean.size() == out && layer.running_var.size() == out &&
           (layer.running_var.array() >= 0.0).all();
    }
    if (!ok) throw ModelError(fmt::format("layer {}: parameter shapes inconsistent with spec", i));
  }
}

Network Network::build(std::span<const LayerSpec> specs, Rng& rng) {
  if (specs.empty()) throw ModelError("network needs at least one layer");
  std::vector<DenseLayer> layers;
  layers.reserve(specs.size());
  for (const auto& spec : specs) layers.push_back(glorot_init(spec, rng));
  return Network(std::move(layers));
}

std::size_t Network::input_width() const {
  return layers_.empty() ? 0 : layers_.front().spec.fan_in;
}

std::size_t Network::output_width() const {
  return layers_.empty() ? 0 : layers_.back().spec.fan_out;
}

bool Network::uses_batch_norm() const {
  for (const auto& layer : layers_) {
    if (layer.spec.batch_norm) return true;
  }
  return false;
}

Matrix Network::predict(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_width()) {
    throw ModelError(fmt::format("input has {} columns, network expects {}", x.cols(), input_width()));
  }
  Matrix a = x;
  for (const auto& layer : layers_) {
    Matrix z = (a * layer.weights).rowwise() + layer.bias;
    if (layer.spec.batch_norm) {
      const RowVector inv_std = (layer.running_var.array() + kBatchNormEpsilon).rsqrt().matrix();
      z = ((z.rowwise() - layer.running_mean).array().rowwise() * inv_std.array()).matrix();
      z = (z.array().rowwise() * layer.gamma.array()).matrix().rowwise() + layer.beta;
    }
    a = activate(layer.spec.activation, z);
  }
  return a;
}

template <typename MaskFn>
Matrix Network::forward_impl(const Matrix& x, ForwardCache& cache, MaskFn&& mask_for) const {
  if (static_cast<std::size_t>(x.cols()) != input_width()) {
    throw ModelError(fmt::format("input has {} columns, network expects {}", x.cols(), input_width()));
  }
  if (uses_batch_norm() && x.rows() < 2) {
    throw ModelError("training pass with batch norm needs a batch of at least 2 rows");
  }
  cache.layers.assign(layers_.size(), LayerCache{});
  const double n = static_cast<double>(x.rows());
  Matrix a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    auto& c = cache.layers[l];
    c.input = a;
    c.affine = (a * layer.weights).rowwise() + layer.bias;
    if (layer.spec.batch_norm) {
      c.batch_mean = c.affine.colwise().mean();
      const Matrix centered = c.affine.rowwise() - c.batch_mean;
      c.batch_var = centered.array().square().colwise().sum().matrix() / n;
      const RowVector inv_std = (c.batch_var.array() + kBatchNormEpsilon).rsqrt().matrix();
      c.normalized = (centered.array().rowwise() * inv_std.array()).matrix();
      c.pre_activation =
          (c.normalized.array().rowwise() * layer.gamma.array()).matrix().rowwise() + layer.beta;
    } else {
      c.pre_activation = c.affine;
    }
    c.activated = activate(layer.spec.activation, c.pre_activation);
    c.mask = mask_for(l, c.activated.rows(), c.activated.cols());
    if (c.mask.size() > 0) {
      if (c.mask.rows() != c.activated.rows() || c.mask.cols() != c.activated.cols()) {
        throw ModelError(fmt::format("layer {}: dropout mask shape mismatch", l));
      }
      a = c.activated.cwiseProduct(c.mask);
    } else {
      a = c.activated;
    }
  }
  return a;
}

Matrix Network::forward_train(const Matrix& x, ForwardCache& cache, Rng& rng) const {
  return forward_impl(x, cache, [&](std::size_t l, Eigen::Index rows, Eigen::Index cols) {
    const double rate = layers_[l].spec.dropout_rate;
    if (rate == 0.0) return Matrix();
    Matrix mask(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      mask.row(i) = dropout_mask(rate, static_cast<std::size_t>(cols), rng);
    }
    return mask;
  });
}

Matrix Network::forward_train(const Matrix& x, ForwardCache& cache, const DropoutMasks& masks) const {
  if (masks.size() != layers_.size()) {
    throw ModelError(fmt::format("expected {} dropout masks, got {}", layers_.size(), masks.size()));
  }
  return forward_impl(x, cache, [&](std::size_t l, Eigen::Index, Eigen::Index) { return masks[l]; });
}

Matrix Network::backward(const ForwardCache& cache, const Matrix& output_grad,
                         NetworkGrads& grads) const {
  if (cache.layers.size() != layers_.size()) {
    throw ModelError("backward: missing or mismatched forward cache");
  }
  grads.layers.resize(layers_.size());
  Matrix delta = output_grad;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    const auto& c = cache.layers[k];
    auto& g = grads.layers[k];
    if (delta.rows() != c.activated.rows() || delta.cols() != c.activated.cols()) {
      throw ModelError(fmt::format("backward: gradient shape mismatch at layer {}", k));
    }
    if (c.mask.size() > 0) delta = delta.cwiseProduct(c.mask);
    Matrix d_pre =
        delta.cwiseProduct(activation_derivative(layer.spec.activation, c.pre_activation, c.activated));

    Matrix d_affine;
    if (layer.spec.batch_norm) {
      const double n = static_cast<double>(d_pre.rows());
      g.gamma = d_pre.cwiseProduct(c.normalized).colwise().sum();
      g.beta = d_pre.colwise().sum();
      const Matrix d_norm = (d_pre.array().rowwise() * layer.gamma.array()).matrix();
      const RowVector inv_std = (c.batch_var.array() + kBatchNormEpsilon).rsqrt().matrix();
      const RowVector sum_d = d_norm.colwise().sum();
      const RowVector sum_dx = d_norm.cwiseProduct(c.normalized).colwise().sum();
      Matrix inner = (n * d_norm).rowwise() - sum_d;
      inner -= (c.normalized.array().rowwise() * sum_dx.array()).matrix();
      d_affine = ((inner.array().rowwise() * inv_std.array()) / n).matrix();
    } else {
      d_affine = std::move(d_pre);
    }
    g.weights = c.input.transpose() * d_affine;
    g.bias = d_affine.colwise().sum();
    delta = d_affine * layer.weights.transpose();
  }
  return delta;
}

void Network::update_running_stats(const ForwardCache& cache, double momentum) {
  if (cache.layers.size() != layers_.size()) {
    throw ModelError("update_running_stats: mismatched forward cache");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    if (!layer.spec.batch_norm) continue;
    layer.running_mean = momentum * layer.running_mean + (1.0 - momentum) * cache.layers[l].batch_mean;
    layer.running_var = momentum * layer.running_var + (1.0 - momentum) * cache.layers[l].batch_var;
  }
}

NetworkGrads Network::zero_grads() const {
  NetworkGrads grads;
  for (const auto& layer : layers_) {
    LayerGrads g;
    g.weights = Matrix::Zero(layer.weights.rows(), layer.weights.cols());
    g.bias = RowVector::Zero(layer.bias.size());
    if (layer.spec.batch_norm) {
      g.gamma = RowVector::Zero(layer.gamma.size());
      g.beta = RowVector::Zero(layer.beta.size());
    }
    grads.layers.push_back(std::move(g));
  }
  return grads;
}

void Network::append_slots(NetworkGrads& grads, std::vector<ParamSlot>& slots) {
  if (grads.layers.size() != layers_.size()) grads = zero_grads();
  auto add = [&](auto& value, auto& grad) {
    if (value.size() != grad.size()) grad.setZero(value.rows(), value.cols());
    slots.push_back({value.data(), grad.data(), static_cast<std::size_t>(value.size())});
  };
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    auto& g = grads.layers[l];
    add(layer.weights, g.weights);
    add(layer.bias, g.bias);
    if (layer.spec.batch_norm) {
      add(layer.gamma, g.gamma);
      add(layer.beta, g.beta);
    }
  }
}

double mse_loss(const Vector& predictions, const Vector& targets) {
  if (predictions.size() != targets.size() || predictions.size() == 0) {
    throw ModelError(fmt::format("mse_loss: lengths {} and {} must match and be non-zero",
                                 predictions.size(), targets.size()));
  }
  return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

Vector mse_gradient(const Vector& predictions, const Vector& targets) {
  if (predictions.size() != targets.size() || predictions.size() == 0) {
    throw ModelError("mse_gradient: length mismatch");
  }
  return 2.0 * (predictions - targets) / static_cast<double>(predictions.size());
}

std::string_view optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::rmsprop: return "rmsprop";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view name) {
  for (auto k : {OptimizerKind::sgd, OptimizerKind::rmsprop, OptimizerKind::adam}) {
    if (optimizer_name(k) == name) return k;
  }
  throw ModelError(fmt::format("unknown optimizer '{}'", name));
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate)
    : kind_(kind), learning_rate_(learning_rate) {
  if (!(learning_rate > 0.0)) throw ModelError("learning rate must be positive");
}

void Optimizer::step(std::span<const ParamSlot> slots) {
  if (first_.empty() && second_.empty()) {
    for (const auto& s : slots) {
      if (kind_ == OptimizerKind::adam) first_.emplace_back(s.size, 0.0);
      if (kind_ != OptimizerKind::sgd) second_.emplace_back(s.size, 0.0);
    }
  }
  const bool adaptive = kind_ != OptimizerKind::sgd;
  if (adaptive && second_.size() != slots.size()) {
    throw ModelError("optimizer: parameter layout changed between steps");
  }
  ++step_count_;
  const double lr = learning_rate_;
  const double t = static_cast<double>(step_count_);
  const double bias1 = 1.0 - std::pow(kAdamBeta1, t);
  const double bias2 = 1.0 - std::pow(kAdamBeta2, t);

  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& s = slots[k];
    if (adaptive && second_[k].size() != s.size) {
      throw ModelError(fmt::format("optimizer: slot {} changed size", k));
    }
    for (std::size_t i = 0; i < s.size; ++i) {
      const double g = s.grad[i];
      switch (kind_) {
        case OptimizerKind::sgd:
          s.value[i] -= lr * g;
          break;
        case OptimizerKind::rmsprop: {
          double& acc = second_[k][i];
          acc = kRmsDecay * acc + (1.0 - kRmsDecay) * g * g;
          s.value[i] -= lr * g / std::sqrt(acc + kEpsilon);
          break;
        }
        case OptimizerKind::adam: {
          double& m = first_[k][i];
          double& v = second_[k][i];
          m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
          v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
          s.value[i] -= lr * (m / bias1) / (std::sqrt(v / bias2) + kEpsilon);
          break;
        }
      }
    }
  }
}

namespace {

constexpr std::string_view kNetworkMagic = "mmfusion-network";
constexpr int kNetworkVersion = 1;

template <typename Derived>
void write_values(std::ostream& out, std::string_view tag, const Eigen::DenseBase<Derived>& m) {
  out << tag;
  // Row-major order regardless of storage.
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ' ' << fmt::format("{}", m(i, j));
  }
  out << '\n';
}

std::string read_token(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw ModelError("checkpoint: unexpected end of input");
  return token;
}

void expect_token(std::istream& in, std::string_view expected) {
  const auto token = read_token(in);
  if (token != expected) {
    throw ModelError(fmt::format("checkpoint: expected '{}', found '{}'", expected, token));
  }
}

template <typename T>
T read_number(std::istream& in) {
  const auto token = read_token(in);
  T value{};
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ModelError(fmt::format("checkpoint: malformed number '{}'", token));
  }
  return value;
}

template <typename Derived>
void read_values(std::istream& in, std::string_view tag, Eigen::PlainObjectBase<Derived>& m,
                 Eigen::Index rows, Eigen::Index cols) {
  expect_token(in, tag);
  m.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = read_number<double>(in);
  }
}

}  // namespace

void save_network(std::ostream& out, const Network& net, std::uint64_t seed) {
  out << kNetworkMagic << ' ' << kNetworkVersion << '\n';
  out << "seed " << seed << '\n';
  out << "layers " << net.layers().size() << '\n';
  for (const auto& layer : net.layers()) {
    const auto& s = layer.spec;
    out << fmt::format("layer {} {} {} {} {}\n", s.fan_in, s.fan_out, activation_name(s.activation),
                       s.batch_norm ? 1 : 0, s.dropout_rate);
    write_values(out, "weights", layer.weights);
    write_values(out, "bias", layer.bias);
    if (s.batch_norm) {
      write_values(out, "gamma", layer.gamma);
      write_values(out, "beta", layer.beta);
      write_values(out, "running_mean", layer.running_mean);
      write_values(out, "running_var", layer.running_var);
    }
  }
}

Network load_network(std::istream& in, std::uint64_t* seed) {
  expect_token(in, kNetworkMagic);
  const int version = read_number<int>(in);
  if (version != kNetworkVersion) {
    throw ModelError(fmt::format("checkpoint: unsupported version {}", version));
  }
  expect_token(in, "seed");
  const auto stored_seed = read_number<std::uint64_t>(in);
  if (seed) *seed = stored_seed;
  expect_token(in, "layers");
  const auto count = read_number<std::size_t>(in);
  std::vector<DenseLayer> layers(count);
  for (auto& layer : layers) {
    expect_token(in, "layer");
    auto& s = layer.spec;
    s.fan_in = read_number<std::size_t>(in);
    s.fan_out = read_number<std::size_t>(in);
    s.activation = parse_activation(read_token(in));
    s.batch_norm = read_number<int>(in) != 0;
    s.dropout_rate = read_number<double>(in);
    s.validate();
    const auto in_w = static_cast<Eigen::Index>(s.fan_in);
    const auto out_w = static_cast<Eigen::Index>(s.fan_out);
    read_values(in, "weights", layer.weights, in_w, out_w);
    read_values(in, "bias", layer.bias, 1, out_w);
    if (s.batch_norm) {
      read_values(in, "gamma", layer.gamma, 1, out_w);
      read_values(in, "beta", layer.beta, 1, out_w);
      read_values(in, "running_mean", layer.running_mean, 1, out_w);
      read_values(in, "running_var", layer.running_var, 1, out_w);
    }
  }
  return Network(std::move(layers));
}

}  // namespace mmf
