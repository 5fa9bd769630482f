#include "mmfusion/models.hpp"

#include <fmt/format.h>

#include <istream>
#include <ostream>

#include "mmfusion/error.hpp"
#include "mmfusion/features.hpp"

namespace mmf {

void ModelSpec::validate() const {
  if (hidden.layers < 1 || hidden.units < 1) {
    throw ModelError("model spec: hidden layer count and width must be >= 1");
  }
  if (!(hidden.dropout >= 0.0 && hidden.dropout < 1.0)) {
    throw ModelError(fmt::format("model spec: dropout {} outside [0, 1)", hidden.dropout));
  }
  if (variant == Variant::intermediate_fusion && head_layers < 1) {
    throw ModelError("model spec: intermediate fusion head needs at least one hidden layer");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ModelError(fmt::format("model spec: lambda {} outside [0, 1]", lambda));
  }
}

std::string variant_label(const ModelSpec& spec) {
  switch (spec.variant) {
    case Variant::single_modal:
      return spec.source == Modality::domestic ? "domestic_only" : "foreign_only";
    case Variant::early_fusion: return "early";
    case Variant::intermediate_fusion: return "intermediate";
    case Variant::late_fusion: return "late";
  }
  return "?";
}

ModelSpec with_variant(ModelSpec base, std::string_view label) {
  if (label == "domestic_only") {
    base.variant = Variant::single_modal;
    base.source = Modality::domestic;
  } else if (label == "foreign_only") {
    base.variant = Variant::single_modal;
    base.source = Modality::foreign;
  } else if (label == "early") {
    base.variant = Variant::early_fusion;
  } else if (label == "intermediate") {
    base.variant = Variant::intermediate_fusion;
  } else if (label == "late") {
    base.variant = Variant::late_fusion;
  } else {
    throw ModelError(fmt::format("unknown model variant '{}'", label));
  }
  return base;
}

std::vector<LayerSpec> branch_layers(std::size_t input_width, const HiddenSpec& hidden,
                                     std::size_t layer_count, bool with_output) {
  std::vector<LayerSpec> specs;
  std::size_t width = input_width;
  for (std::size_t i = 0; i < layer_count; ++i) {
    specs.push_back({width, hidden.units, hidden.activation, hidden.batch_norm, hidden.dropout});
    width = hidden.units;
  }
  if (with_output) specs.push_back({width, 1, Activation::linear, false, 0.0});
  return specs;
}

FusionModel::FusionModel(ModelSpec spec, std::vector<Network> nets, std::uint64_t seed)
    : spec_(spec), nets_(std::move(nets)), seed_(seed) {
  spec_.validate();
  std::size_t expected = 1;
  if (spec_.variant == Variant::intermediate_fusion) expected = 3;
  if (spec_.variant == Variant::late_fusion) expected = 2;
  if (nets_.size() != expected) {
    throw ModelError(fmt::format("{} model needs {} networks, got {}", variant_label(spec_),
                                 expected, nets_.size()));
  }
  auto check = [&](std::size_t i, std::size_t in, std::size_t out) {
    if (nets_[i].input_width() != in || nets_[i].output_width() != out) {
      throw ModelError(fmt::format("{} model: network {} is {}->{}, expected {}->{}",
                                   variant_label(spec_), i, nets_[i].input_width(),
                                   nets_[i].output_width(), in, out));
    }
  };
  switch (spec_.variant) {
    case Variant::single_modal: check(0, kFeatureCount, 1); break;
    case Variant::early_fusion: check(0, 2 * kFeatureCount, 1); break;
    case Variant::late_fusion:
      check(0, kFeatureCount, 1);
      check(1, kFeatureCount, 1);
      break;
    case Variant::intermediate_fusion:
      check(2, nets_[0].output_width() + nets_[1].output_width(), 1);
      check(0, kFeatureCount, nets_[0].output_width());
      check(1, kFeatureCount, nets_[1].output_width());
      break;
  }
}

FusionModel build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const auto& h = spec.hidden;
  std::vector<Network> nets;
  auto add = [&](std::size_t in, std::size_t layers, bool with_output) {
    const auto specs = branch_layers(in, h, layers, with_output);
    nets.push_back(Network::build(specs, rng));
  };
  switch (spec.variant) {
    case Variant::single_modal: add(kFeatureCount, h.layers, true); break;
    case Variant::early_fusion: add(2 * kFeatureCount, h.layers, true); break;
    case Variant::intermediate_fusion:
      add(kFeatureCount, h.layers, false);
      add(kFeatureCount, h.layers, false);
      add(2 * h.units, spec.head_layers, true);
      break;
    case Variant::late_fusion:
      add(kFeatureCount, h.layers, true);
      add(kFeatureCount, h.layers, true);
      break;
  }
  return FusionModel(spec, std::move(nets), seed);
}

double late_fusion_combine(double r_domestic, double r_foreign, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ModelError(fmt::format("late fusion weight {} outside [0, 1]", lambda));
  }
  return lambda * r_domestic + (1.0 - lambda) * r_foreign;
}

bool FusionModel::uses_batch_norm() const {
  for (const auto& net : nets_) {
    if (net.uses_batch_norm()) return true;
  }
  return false;
}

namespace {

void check_inputs(const Matrix& domestic, const Matrix& foreign) {
  if (domestic.cols() != static_cast<Eigen::Index>(kFeatureCount) ||
      foreign.cols() != static_cast<Eigen::Index>(kFeatureCount) ||
      domestic.rows() != foreign.rows()) {
    throw ModelError(fmt::format("model input blocks must be n x {} each (got {}x{} and {}x{})",
                                 kFeatureCount, domestic.rows(), domestic.cols(), foreign.rows(),
                                 foreign.cols()));
  }
}

Matrix concat_columns(const Matrix& left, const Matrix& right) {
  Matrix out(left.rows(), left.cols() + right.cols());
  out << left, right;
  return out;
}

}  // namespace

template <typename NetForward>
Vector FusionModel::forward_impl(const Matrix& domestic, const Matrix& foreign, ModelCache& cache,
                                 NetForward&& run) const {
  check_inputs(domestic, foreign);
  cache.nets.assign(nets_.size(), ForwardCache{});
  cache.outputs.assign(nets_.size(), Matrix{});
  auto out = [&](std::size_t i, const Matrix& x) -> const Matrix& {
    cache.outputs[i] = run(i, x, cache.nets[i]);
    return cache.outputs[i];
  };
  switch (spec_.variant) {
    case Variant::single_modal:
      return out(0, spec_.source == Modality::domestic ? domestic : foreign).col(0);
    case Variant::early_fusion: return out(0, concat_columns(domestic, foreign)).col(0);
    case Variant::intermediate_fusion: {
      const Matrix& a = out(0, domestic);
      const Matrix& b = out(1, foreign);
      return out(2, concat_columns(a, b)).col(0);
    }
    case Variant::late_fusion: {
      const Vector a = out(0, domestic).col(0);
      const Vector b = out(1, foreign).col(0);
      return spec_.lambda * a + (1.0 - spec_.lambda) * b;
    }
  }
  return Vector();
}

Vector FusionModel::predict(const Matrix& domestic, const Matrix& foreign) const {
  ModelCache scratch;
  return forward_impl(domestic, foreign, scratch,
                      [&](std::size_t i, const Matrix& x, ForwardCache&) { return nets_[i].predict(x); });
}

Vector FusionModel::forward_train(const Matrix& domestic, const Matrix& foreign, ModelCache& cache,
                                  Rng& rng) const {
  return forward_impl(domestic, foreign, cache, [&](std::size_t i, const Matrix& x, ForwardCache& c) {
    return nets_[i].forward_train(x, c, rng);
  });
}

Vector FusionModel::forward_train(const Matrix& domestic, const Matrix& foreign, ModelCache& cache,
                                  const std::vector<DropoutMasks>& masks) const {
  if (masks.size() != nets_.size()) throw ModelError("one dropout mask set per network required");
  return forward_impl(domestic, foreign, cache, [&](std::size_t i, const Matrix& x, ForwardCache& c) {
    return nets_[i].forward_train(x, c, masks[i]);
  });
}

void FusionModel::backward(const ModelCache& cache, const Vector& prediction_grad,
                           ModelGrads& grads) const {
  if (cache.nets.size() != nets_.size()) throw ModelError("backward: missing forward cache");
  grads.nets.resize(nets_.size());
  const Matrix g = prediction_grad;
  switch (spec_.variant) {
    case Variant::single_modal:
    case Variant::early_fusion:
      nets_[0].backward(cache.nets[0], g, grads.nets[0]);
      break;
    case Variant::late_fusion:
      nets_[0].backward(cache.nets[0], spec_.lambda * g, grads.nets[0]);
      nets_[1].backward(cache.nets[1], (1.0 - spec_.lambda) * g, grads.nets[1]);
      break;
    case Variant::intermediate_fusion: {
      const Matrix d_head = nets_[2].backward(cache.nets[2], g, grads.nets[2]);
      const auto left = static_cast<Eigen::Index>(nets_[0].output_width());
      const auto right = static_cast<Eigen::Index>(nets_[1].output_width());
      nets_[0].backward(cache.nets[0], d_head.leftCols(left), grads.nets[0]);
      nets_[1].backward(cache.nets[1], d_head.rightCols(right), grads.nets[1]);
      break;
    }
  }
}

void FusionModel::update_running_stats(const ModelCache& cache) {
  for (std::size_t i = 0; i < nets_.size(); ++i) nets_[i].update_running_stats(cache.nets.at(i));
}

ModelGrads FusionModel::zero_grads() const {
  ModelGrads grads;
  for (const auto& net : nets_) grads.nets.push_back(net.zero_grads());
  return grads;
}

std::vector<ParamSlot> FusionModel::slots(ModelGrads& grads) {
  if (grads.nets.size() != nets_.size()) grads = zero_grads();
  std::vector<ParamSlot> out;
  for (std::size_t i = 0; i < nets_.size(); ++i) nets_[i].append_slots(grads.nets[i], out);
  return out;
}

FusionModel FusionModel::late_branch(std::size_t i) const {
  if (spec_.variant != Variant::late_fusion || i > 1) {
    throw ModelError("late_branch: only late-fusion models have branches 0 and 1");
  }
  ModelSpec branch = spec_;
  branch.variant = Variant::single_modal;
  branch.source = i == 0 ? Modality::domestic : Modality::foreign;
  return FusionModel(branch, {nets_[i]}, seed_);
}

void FusionModel::set_network(std::size_t i, Network net) {
  if (i >= nets_.size()) throw ModelError("set_network: index out of range");
  if (net.input_width() != nets_[i].input_width() || net.output_width() != nets_[i].output_width()) {
    throw ModelError("set_network: replacement network has a different shape");
  }
  nets_[i] = std::move(net);
}

void save_model(std::ostream& out, const FusionModel& model) {
  const auto& s = model.spec();
  out << "mmfusion-model 1\n";
  out << fmt::format("variant {}\n", variant_label(s));
  out << fmt::format("hidden {} {} {} {} {}\n", s.hidden.layers, s.hidden.units,
                     activation_name(s.hidden.activation), s.hidden.dropout, s.hidden.batch_norm ? 1 : 0);
  out << fmt::format("head_layers {}\nlambda {}\n", s.head_layers, s.lambda);
  out << "networks " << model.networks().size() << '\n';
  for (const auto& net : model.networks()) save_network(out, net, model.seed());
}

FusionModel load_model(std::istream& in) {
  auto expect = [&](std::string_view tag) {
    std::string token;
    if (!(in >> token) || token != tag) {
      throw ModelError(fmt::format("model checkpoint: expected '{}'", tag));
    }
  };
  expect("mmfusion-model");
  int version = 0;
  in >> version;
  if (version != 1) throw ModelError("model checkpoint: unsupported version");
  expect("variant");
  std::string label;
  in >> label;
  ModelSpec spec = with_variant(ModelSpec{}, label);
  expect("hidden");
  std::string activation;
  int bn = 0;
  in >> spec.hidden.layers >> spec.hidden.units >> activation >> spec.hidden.dropout >> bn;
  spec.hidden.activation = parse_activation(activation);
  spec.hidden.batch_norm = bn != 0;
  expect("head_layers");
  in >> spec.head_layers;
  expect("lambda");
  in >> spec.lambda;
  expect("networks");
  std::size_t count = 0;
  in >> count;
  if (!in) throw ModelError("model checkpoint: truncated header");
  std::vector<Network> nets;
  std::uint64_t seed = 0;
  for (std::size_t i = 0; i < count; ++i) nets.push_back(load_network(in, &seed));
  return FusionModel(spec, std::move(nets), seed);
}

}  // namespace mmf
