#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmfusion/neural.hpp"

namespace mmf {

/// A finite categorical dimension. Numeric hyperparameters are stored as
/// their textual choices.
struct Dimension {
  std::string name;
  std::vector<std::string> choices;
};

/// A configuration holds one choice index per dimension.
using TrialConfig = std::vector<std::size_t>;

class SearchSpace {
 public:
  SearchSpace& add(std::string name, std::vector<std::string> choices);

  const std::vector<Dimension>& dimensions() const { return dims_; }
  std::size_t size() const { return dims_.size(); }
  std::size_t index_of(std::string_view name) const;
  bool contains(const TrialConfig& config) const;

  const std::string& value(const TrialConfig& config, std::string_view name) const;
  double number(const TrialConfig& config, std::string_view name) const;

  /// Hidden layers, hidden units, dropout, batch size, optimizer, activation,
  /// learning rate and epochs as listed for the fusion networks. With
  /// `head_layers` set, adds the intermediate-fusion head depth.
  static SearchSpace fusion_default(bool head_layers = false);

 private:
  std::vector<Dimension> dims_;
};

enum class TrialStatus { completed, failed };

struct Trial {
  std::size_t id = 0;
  TrialConfig config;
  double loss = 0.0;
  TrialStatus status = TrialStatus::completed;
};

struct TpeConfig {
  double gamma = 0.25;
  std::size_t n_startup = 10;
  std::size_t n_candidates = 24;
  std::size_t max_trials = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

/// good = the ceil(gamma * n) lowest-loss completed trials (ties go to the
/// earlier trial id), bad = the rest.
std::pair<std::vector<Trial>, std::vector<Trial>> split_good_bad(std::span<const Trial> trials,
                                                                 double gamma);

/// Add-one smoothed categorical density: (count(c) + 1) / (n + k).
std::vector<double> parzen_categorical_weights(std::span<const std::size_t> observations,
                                               std::size_t domain_size);

/// Next configuration to evaluate. Uniform sampling until `n_startup`
/// completed trials exist; afterwards the best of `n_candidates` draws from
/// the good density l(x) ranked by l(x)/g(x).
TrialConfig suggest(std::span<const Trial> history, const SearchSpace& space, const TpeConfig& cfg,
                    Rng& rng);

/// Trial history guarded for concurrent suggest/record calls.
class TrialStore {
 public:
  TrialStore(SearchSpace space, TpeConfig cfg);

  TrialConfig suggest();
  void record(TrialConfig config, double loss);
  std::vector<Trial> history() const;
  const SearchSpace& space() const { return space_; }

 private:
  SearchSpace space_;
  TpeConfig cfg_;
  mutable std::mutex mutex_;
  Rng rng_;
  std::vector<Trial> trials_;
};

struct OptimizeResult {
  Trial best;
  std::vector<Trial> history;
};

/// Runs max_trials suggest/evaluate/record cycles. Non-finite losses and
/// exceptions thrown by the objective mark the trial failed.
OptimizeResult optimize(const std::function<double(const TrialConfig&)>& objective,
                        const SearchSpace& space, const TpeConfig& cfg);

/// CSV: trial_id,<one column per dimension>,val_mse,status.
void write_trials_csv(std::ostream& out, const SearchSpace& space, std::span<const Trial> trials);

}  // namespace mmf
