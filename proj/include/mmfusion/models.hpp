#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mmfusion/neural.hpp"

namespace mmf {

enum class Variant { single_modal, early_fusion, intermediate_fusion, late_fusion };
enum class Modality { domestic, foreign };

/// Hidden-layer stack shared by every branch of a model.
struct HiddenSpec {
  std::size_t layers = 2;
  std::size_t units = 8;
  Activation activation = Activation::tanh;
  double dropout = 0.25;
  bool batch_norm = true;

  bool operator==(const HiddenSpec&) const = default;
};

struct ModelSpec {
  Variant variant = Variant::early_fusion;
  Modality source = Modality::domestic;  // single-modal input market
  HiddenSpec hidden;
  std::size_t head_layers = 2;  // hidden layers of the intermediate-fusion head
  double lambda = 0.5;          // late-fusion weight on the domestic branch

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Stable identifiers: domestic_only, foreign_only, early, intermediate, late.
std::string variant_label(const ModelSpec& spec);
/// Sets variant (and source) on `base` from a label produced by variant_label.
ModelSpec with_variant(ModelSpec base, std::string_view label);

/// Layer chain of one branch: `hidden.layers` hidden layers from `input_width`,
/// followed by a single linear output unit when `with_output` is set.
std::vector<LayerSpec> branch_layers(std::size_t input_width, const HiddenSpec& hidden,
                                     std::size_t layer_count, bool with_output);

struct ModelCache {
  std::vector<ForwardCache> nets;
  std::vector<Matrix> outputs;
};

struct ModelGrads {
  std::vector<NetworkGrads> nets;
};

/// One of the four forecaster architectures. Network layout per variant:
///   single_modal, early_fusion: {net}
///   intermediate_fusion:        {domestic branch, foreign branch, head}
///   late_fusion:                {domestic net, foreign net}
/// Inputs are the scaled 5-column domestic and foreign feature blocks.
class FusionModel {
 public:
  FusionModel() = default;
  FusionModel(ModelSpec spec, std::vector<Network> nets, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Network>& networks() const { return nets_; }
  std::vector<Network>& networks() { return nets_; }
  bool uses_batch_norm() const;

  Vector predict(const Matrix& domestic, const Matrix& foreign) const;

  Vector forward_train(const Matrix& domestic, const Matrix& foreign, ModelCache& cache,
                       Rng& rng) const;
  Vector forward_train(const Matrix& domestic, const Matrix& foreign, ModelCache& cache,
                       const std::vector<DropoutMasks>& masks) const;

  void backward(const ModelCache& cache, const Vector& prediction_grad, ModelGrads& grads) const;
  void update_running_stats(const ModelCache& cache);

  ModelGrads zero_grads() const;
  std::vector<ParamSlot> slots(ModelGrads& grads);

  /// Late fusion only: branch i (0 domestic, 1 foreign) as a standalone
  /// single-modal model, and the inverse operation.
  FusionModel late_branch(std::size_t i) const;
  void set_network(std::size_t i, Network net);

 private:
  template <typename NetForward>
  Vector forward_impl(const Matrix& domestic, const Matrix& foreign, ModelCache& cache,
                      NetForward&& run) const;

  ModelSpec spec_;
  std::vector<Network> nets_;
  std::uint64_t seed_ = 0;
};

FusionModel build_model(const ModelSpec& spec, std::uint64_t seed);

double late_fusion_combine(double r_domestic, double r_foreign, double lambda);

void save_model(std::ostream& out, const FusionModel& model);
FusionModel load_model(std::istream& in);

}  // namespace mmf
