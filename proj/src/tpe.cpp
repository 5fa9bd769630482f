#include "mmfusion/tpe.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "mmfusion/error.hpp"

namespace mmf {

SearchSpace& SearchSpace::add(std::string name, std::vector<std::string> choices) {
  if (choices.empty()) throw ConfigError(fmt::format("dimension '{}' has no choices", name));
  for (const auto& d : dims_) {
    if (d.name == name) throw ConfigError(fmt::format("dimension '{}' defined twice", name));
  }
  dims_.push_back({std::move(name), std::move(choices)});
  return *this;
}

std::size_t SearchSpace::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i].name == name) return i;
  }
  throw ConfigError(fmt::format("unknown search dimension '{}'", name));
}

bool SearchSpace::contains(const TrialConfig& config) const {
  if (config.size() != dims_.size()) return false;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (config[i] >= dims_[i].choices.size()) return false;
  }
  return true;
}

const std::string& SearchSpace::value(const TrialConfig& config, std::string_view name) const {
  const auto d = index_of(name);
  if (!contains(config)) throw ConfigError("configuration does not belong to this space");
  return dims_[d].choices[config[d]];
}

double SearchSpace::number(const TrialConfig& config, std::string_view name) const {
  const auto& text = value(config, name);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("dimension '{}' choice '{}' is not numeric", name, text));
  }
  return out;
}

SearchSpace SearchSpace::fusion_default(bool head_layers) {
  SearchSpace space;
  space.add("hidden_layers", {"2", "3"})
      .add("hidden_units", {"2", "4", "8", "16"})
      .add("dropout", {"0.25", "0.5", "0.75"})
      .add("batch_size", {"32", "64", "128"})
      .add("optimizer", {"rmsprop", "adam", "sgd"})
      .add("activation", {"tanh", "relu", "sigmoid"})
      .add("learning_rate", {"0.001"})
      .add("epochs", {"100"});
  if (head_layers) space.add("head_layers", {"2", "3"});
  return space;
}

void TpeConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError(fmt::format("tpe gamma {} outside (0, 1)", gamma));
  if (n_startup < 1) throw ConfigError("tpe n_startup must be >= 1");
  if (n_candidates < 1) throw ConfigError("tpe n_candidates must be >= 1");
  if (max_trials < 1) throw ConfigError("tpe max_trials must be >= 1");
}

std::pair<std::vector<Trial>, std::vector<Trial>> split_good_bad(std::span<const Trial> trials,
                                                                 double gamma) {
  std::vector<Trial> sorted;
  for (const auto& t : trials) {
    if (t.status == TrialStatus::completed) sorted.push_back(t);
  }
  if (sorted.size() < 2) throw ConfigError("split_good_bad: need at least 2 completed trials");
  std::stable_sort(sorted.begin(), sorted.end(), [](const Trial& a, const Trial& b) {
    if (a.loss != b.loss) return a.loss < b.loss;
    return a.id < b.id;
  });
  const auto n_good = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(sorted.size()) - 1e-12));
  const auto cut = std::clamp<std::size_t>(n_good, 1, sorted.size());
  std::vector<Trial> good(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<Trial> bad(sorted.begin() + static_cast<std::ptrdiff_t>(cut), sorted.end());
  return {std::move(good), std::move(bad)};
}

std::vector<double> parzen_categorical_weights(std::span<const std::size_t> observations,
                                               std::size_t domain_size) {
  if (domain_size == 0) throw ConfigError("parzen weights: empty domain");
  std::vector<double> counts(domain_size, 1.0);
  for (auto obs : observations) {
    if (obs >= domain_size) {
      throw ConfigError(fmt::format("parzen weights: observation {} outside domain of size {}", obs,
                                    domain_size));
    }
    counts[obs] += 1.0;
  }
  const double total = static_cast<double>(observations.size() + domain_size);
  for (auto& c : counts) c /= total;
  return counts;
}

namespace {

std::vector<std::vector<double>> densities(std::span<const Trial> trials, const SearchSpace& space) {
  std::vector<std::vector<double>> out;
  std::vector<std::size_t> obs;
  for (std::size_t d = 0; d < space.size(); ++d) {
    obs.clear();
    for (const auto& t : trials) obs.push_back(t.config[d]);
    out.push_back(parzen_categorical_weights(obs, space.dimensions()[d].choices.size()));
  }
  return out;
}

}  // namespace

TrialConfig suggest(std::span<const Trial> history, const SearchSpace& space, const TpeConfig& cfg,
                    Rng& rng) {
  cfg.validate();
  std::vector<Trial> completed;
  for (const auto& t : history) {
    if (t.status == TrialStatus::completed) completed.push_back(t);
  }

  TrialConfig config(space.size(), 0);
  if (completed.size() < std::max<std::size_t>(cfg.n_startup, 2)) {
    for (std::size_t d = 0; d < space.size(); ++d) {
      const auto k = space.dimensions()[d].choices.size();
      if (k > 1) config[d] = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
    }
    return config;
  }

  const auto [good, bad] = split_good_bad(completed, cfg.gamma);
  const auto l = densities(good, space);
  const auto g = densities(bad, space);

  double best_score = -std::numeric_limits<double>::infinity();
  TrialConfig candidate(space.size(), 0);
  for (std::size_t c = 0; c < cfg.n_candidates; ++c) {
    double score = 0.0;
    for (std::size_t d = 0; d < space.size(); ++d) {
      if (l[d].size() == 1) {
        candidate[d] = 0;
        continue;
      }
      std::discrete_distribution<std::size_t> draw(l[d].begin(), l[d].end());
      candidate[d] = draw(rng);
      score += std::log(l[d][candidate[d]]) - std::log(g[d][candidate[d]]);
    }
    if (score > best_score) {
      best_score = score;
      config = candidate;
    }
  }
  return config;
}

TrialStore::TrialStore(SearchSpace space, TpeConfig cfg)
    : space_(std::move(space)), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
}

TrialConfig TrialStore::suggest() {
  std::lock_guard lock(mutex_);
  return mmf::suggest(trials_, space_, cfg_, rng_);
}

void TrialStore::record(TrialConfig config, double loss) {
  std::lock_guard lock(mutex_);
  if (!space_.contains(config)) throw ConfigError("record: configuration outside the search space");
  Trial t;
  t.id = trials_.size();
  t.config = std::move(config);
  t.loss = loss;
  t.status = std::isfinite(loss) ? TrialStatus::completed : TrialStatus::failed;
  trials_.push_back(std::move(t));
}

std::vector<Trial> TrialStore::history() const {
  std::lock_guard lock(mutex_);
  return trials_;
}

OptimizeResult optimize(const std::function<double(const TrialConfig&)>& objective,
                        const SearchSpace& space, const TpeConfig& cfg) {
  TrialStore store(space, cfg);
  for (std::size_t i = 0; i < cfg.max_trials; ++i) {
    TrialConfig config = store.suggest();
    double loss = std::numeric_limits<double>::quiet_NaN();
    try {
      loss = objective(config);
    } catch (const std::exception&) {
      // Recorded as a failed trial below.
    }
    store.record(std::move(config), loss);
  }
  OptimizeResult result;
  result.history = store.history();
  const Trial* best = nullptr;
  for (const auto& t : result.history) {
    if (t.status != TrialStatus::completed) continue;
    if (!best || t.loss < best->loss) best = &t;
  }
  if (!best) throw TrainingError(fmt::format("all {} trials failed", cfg.max_trials));
  result.best = *best;
  return result;
}

void write_trials_csv(std::ostream& out, const SearchSpace& space, std::span<const Trial> trials) {
  out << "trial_id";
  for (const auto& d : space.dimensions()) out << ',' << d.name;
  out << ",val_mse,status\n";
  for (const auto& t : trials) {
    out << t.id;
    for (std::size_t d = 0; d < space.size(); ++d) out << ',' << space.dimensions()[d].choices[t.config[d]];
    out << fmt::format(",{},{}\n", t.loss, t.status == TrialStatus::completed ? "completed" : "failed");
  }
}

}  // namespace mmf
