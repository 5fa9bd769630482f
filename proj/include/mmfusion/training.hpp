#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "mmfusion/features.hpp"
#include "mmfusion/market_data.hpp"
#include "mmfusion/models.hpp"
#include "mmfusion/neural.hpp"

namespace mmf {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;

  void validate(bool batch_norm) const;
};

/// Epochs are numbered from 1; best_epoch is 0 only before the first epoch.
struct EpochLog {
  std::vector<double> train_mse;
  std::vector<double> val_mse;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;

  double best_val_mse() const { return best_epoch == 0 ? 0.0 : val_mse[best_epoch - 1]; }
};

/// Patience rule: an epoch improves only if its loss is strictly below the
/// best so far; training stops once `patience` consecutive epochs fail to
/// improve.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records the next epoch's validation loss. Returns true on improvement.
  bool observe(double val_loss);
  bool should_stop() const { return since_best_ >= patience_; }

  std::size_t epochs() const { return epochs_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct TrainResult {
  FusionModel model;
  /// One log per independently trained unit: a single entry for joint
  /// models, one per branch (domestic, foreign) for late fusion.
  std::vector<EpochLog> logs;
};

/// Mini-batch training on the training rows with early stopping on the
/// validation MSE. Returns the parameters of the best validation epoch.
/// Late-fusion branches are trained independently, each on its own modality.
TrainResult train(FusionModel model, const ScaledDataset& data, const DataSplit& split,
                  const TrainConfig& cfg);

/// Inference-mode MSE (scaled space) over the given rows.
double evaluate_range(const FusionModel& model, const ScaledDataset& data, IndexRange rows);
double evaluate_validation(const FusionModel& model, const ScaledDataset& data, const DataSplit& split);

/// Inference-mode predictions (scaled space) over the given rows.
Vector predict_range(const FusionModel& model, const ScaledDataset& data, IndexRange rows);

void write_epoch_log_csv(std::ostream& out, const EpochLog& log);

}  // namespace mmf
