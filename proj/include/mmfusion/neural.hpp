#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace mmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

enum class Activation { tanh, relu, sigmoid, linear };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.99;

struct LayerSpec {
  std::size_t fan_in = 1;
  std::size_t fan_out = 1;
  Activation activation = Activation::linear;
  bool batch_norm = false;
  double dropout_rate = 0.0;

  void validate() const;
  bool operator==(const LayerSpec&) const = default;
};

/// Parameters of one fully connected layer. Weights are fan_in x fan_out and
/// act on row-major batches: z = x W + b. The batch-norm vectors are empty
/// unless spec.batch_norm is set.
struct DenseLayer {
  LayerSpec spec;
  Matrix weights;
  RowVector bias;
  RowVector gamma;
  RowVector beta;
  RowVector running_mean;
  RowVector running_var;
};

double glorot_stddev(std::size_t fan_in, std::size_t fan_out);

/// Normal(0, 2/(fan_in+fan_out)) weights, zero bias, gamma=1, beta=0,
/// running mean 0 and running variance 1.
DenseLayer glorot_init(const LayerSpec& spec, Rng& rng);

/// Inverted dropout mask: 0 with probability `rate`, otherwise 1/(1-rate).
RowVector dropout_mask(double rate, std::size_t width, Rng& rng);

struct LayerCache {
  Matrix input;
  Matrix affine;      // x W + b
  Matrix normalized;  // batch-normalized affine (x-hat), empty without batch norm
  Matrix pre_activation;
  Matrix activated;
  Matrix mask;  // empty when the layer has no dropout
  RowVector batch_mean;
  RowVector batch_var;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
};

struct LayerGrads {
  Matrix weights;
  RowVector bias;
  RowVector gamma;
  RowVector beta;
};

struct NetworkGrads {
  std::vector<LayerGrads> layers;
};

/// A flat view of one parameter tensor and its gradient, as consumed by Optimizer.
struct ParamSlot {
  double* value = nullptr;
  const double* grad = nullptr;
  std::size_t size = 0;
};

/// Per-layer dropout masks fixed ahead of a training pass; an empty matrix
/// means "no dropout" for that layer.
using DropoutMasks = std::vector<Matrix>;

/// Stack of dense layers: affine, optional batch norm, activation, optional
/// dropout. Training passes are const; running batch-norm statistics are
/// folded in separately through update_running_stats.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<DenseLayer> layers);

  static Network build(std::span<const LayerSpec> specs, Rng& rng);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  std::size_t input_width() const;
  std::size_t output_width() const;
  bool uses_batch_norm() const;

  /// Inference pass: running batch-norm statistics, no dropout.
  Matrix predict(const Matrix& x) const;

  Matrix forward_train(const Matrix& x, ForwardCache& cache, Rng& rng) const;
  Matrix forward_train(const Matrix& x, ForwardCache& cache, const DropoutMasks& masks) const;

  /// Gradients of the loss with respect to every parameter, given the
  /// gradient at the network output. Returns the gradient at the input.
  Matrix backward(const ForwardCache& cache, const Matrix& output_grad, NetworkGrads& grads) const;

  void update_running_stats(const ForwardCache& cache, double momentum = kBatchNormMomentum);

  NetworkGrads zero_grads() const;
  /// Trainable tensors (weights, bias, gamma, beta) paired with `grads`.
  void append_slots(NetworkGrads& grads, std::vector<ParamSlot>& slots);

 private:
  template <typename MaskFn>
  Matrix forward_impl(const Matrix& x, ForwardCache& cache, MaskFn&& mask_for) const;

  std::vector<DenseLayer> layers_;
};

double mse_loss(const Vector& predictions, const Vector& targets);
/// d(mse)/d(prediction) = 2 (prediction - target) / N.
Vector mse_gradient(const Vector& predictions, const Vector& targets);

enum class OptimizerKind { sgd, rmsprop, adam };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

/// SGD without momentum; RMSProp with decay 0.9; Adam with beta 0.9/0.999.
/// Both adaptive methods use epsilon 1e-8.
class Optimizer {
 public:
  static constexpr double kRmsDecay = 0.9;
  static constexpr double kAdamBeta1 = 0.9;
  static constexpr double kAdamBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  Optimizer(OptimizerKind kind, double learning_rate);

  void step(std::span<const ParamSlot> slots);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return learning_rate_; }
  std::size_t step_count() const { return step_count_; }

 private:
  OptimizerKind kind_;
  double learning_rate_;
  std::size_t step_count_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

/// Text checkpoint holding layer specs, every parameter, running statistics
/// and the seed the network was initialised from. Round-trips exactly.
void save_network(std::ostream& out, const Network& net, std::uint64_t seed);
Network load_network(std::istream& in, std::uint64_t* seed = nullptr);

}  // namespace mmf
