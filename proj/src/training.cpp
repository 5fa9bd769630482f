#include "mmfusion/training.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mmfusion/error.hpp"

namespace mmf {

void TrainConfig::validate(bool batch_norm) const {
  if (batch_size < 1 || (batch_norm && batch_size < 2)) {
    throw TrainingError(fmt::format("batch size {} too small", batch_size));
  }
  if (max_epochs < 1) throw TrainingError("max_epochs must be >= 1");
  if (patience < 1 || patience >= max_epochs) {
    throw TrainingError(fmt::format("patience {} must lie in [1, max_epochs)", patience));
  }
  if (!(learning_rate > 0.0)) throw TrainingError("learning rate must be positive");
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {}

bool EarlyStopping::observe(double val_loss) {
  ++epochs_;
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

namespace {

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Vector gather(const Vector& v, std::span<const std::size_t> idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(idx[i]));
  return out;
}

// Batch boundaries over `count` shuffled rows. The last short batch is kept,
// except that a single leftover row joins the previous batch when batch norm
// needs at least two rows.
std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(std::size_t count, std::size_t batch,
                                                              bool batch_norm) {
  std::vector<std::pair<std::size_t, std::size_t>> bounds;
  for (std::size_t start = 0; start < count; start += batch) {
    bounds.emplace_back(start, std::min(count, start + batch));
  }
  if (batch_norm && bounds.size() > 1 && bounds.back().second - bounds.back().first == 1) {
    bounds.pop_back();
    bounds.back().second = count;
  }
  return bounds;
}

TrainResult train_joint(FusionModel model, const ScaledDataset& data, const DataSplit& split,
                        const TrainConfig& cfg) {
  const bool bn = model.uses_batch_norm();
  cfg.validate(bn);
  if (split.train.size() == 0 || split.validation.size() == 0) {
    throw TrainingError("train: empty training or validation partition");
  }
  if (split.validation.end > data.size()) throw TrainingError("train: split exceeds dataset");
  if (bn && split.train.size() < 2) throw TrainingError("train: batch norm needs >= 2 training rows");

  Rng rng(cfg.seed);
  Optimizer optimizer(cfg.optimizer, cfg.learning_rate);
  ModelGrads grads = model.zero_grads();
  std::vector<ParamSlot> slots = model.slots(grads);

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), split.train.begin);

  EarlyStopping stopper(cfg.patience);
  EpochLog log;
  FusionModel best = model;
  ModelCache cache;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sq_sum = 0.0;
    const auto bounds = batch_bounds(order.size(), cfg.batch_size, bn);
    for (std::size_t b = 0; b < bounds.size(); ++b) {
      const std::span<const std::size_t> idx(order.data() + bounds[b].first,
                                             bounds[b].second - bounds[b].first);
      const Matrix dom = gather_rows(data.domestic, idx);
      const Matrix fgn = gather_rows(data.foreign, idx);
      const Vector y = gather(data.target, idx);
      const Vector pred = model.forward_train(dom, fgn, cache, rng);
      const double loss = mse_loss(pred, y);
      if (!std::isfinite(loss)) {
        throw TrainingError(fmt::format("non-finite training loss at epoch {} batch {}", epoch, b + 1));
      }
      sq_sum += loss * static_cast<double>(idx.size());
      model.backward(cache, mse_gradient(pred, y), grads);
      optimizer.step(slots);
      model.update_running_stats(cache);
    }
    const double val = evaluate_validation(model, data, split);
    if (!std::isfinite(val)) {
      throw TrainingError(fmt::format("non-finite validation loss at epoch {}", epoch));
    }
    log.train_mse.push_back(sq_sum / static_cast<double>(order.size()));
    log.val_mse.push_back(val);
    if (stopper.observe(val)) best = model;
    log.stopped_epoch = epoch;
    if (stopper.should_stop()) break;
  }
  log.best_epoch = stopper.best_epoch();
  return {std::move(best), {std::move(log)}};
}

}  // namespace

TrainResult train(FusionModel model, const ScaledDataset& data, const DataSplit& split,
                  const TrainConfig& cfg) {
  if (model.spec().variant != Variant::late_fusion) {
    return train_joint(std::move(model), data, split, cfg);
  }
  TrainResult result;
  for (std::size_t i = 0; i < 2; ++i) {
    TrainConfig branch_cfg = cfg;
    branch_cfg.seed = cfg.seed + 0x9E3779B97F4A7C15ULL * (i + 1);
    auto branch = train_joint(model.late_branch(i), data, split, branch_cfg);
    model.set_network(i, std::move(branch.model.networks().front()));
    result.logs.push_back(std::move(branch.logs.front()));
  }
  result.model = std::move(model);
  return result;
}

Vector predict_range(const FusionModel& model, const ScaledDataset& data, IndexRange rows) {
  if (rows.end > data.size() || rows.size() == 0) throw TrainingError("predict_range: bad row range");
  const auto begin = static_cast<Eigen::Index>(rows.begin);
  const auto count = static_cast<Eigen::Index>(rows.size());
  return model.predict(data.domestic.middleRows(begin, count), data.foreign.middleRows(begin, count));
}

double evaluate_range(const FusionModel& model, const ScaledDataset& data, IndexRange rows) {
  const Vector pred = predict_range(model, data, rows);
  return mse_loss(pred, data.target.segment(static_cast<Eigen::Index>(rows.begin), pred.size()));
}

double evaluate_validation(const FusionModel& model, const ScaledDataset& data, const DataSplit& split) {
  return evaluate_range(model, data, split.validation);
}

void write_epoch_log_csv(std::ostream& out, const EpochLog& log) {
  out << "epoch,train_mse,val_mse\n";
  for (std::size_t e = 0; e < log.val_mse.size(); ++e) {
    out << fmt::format("{},{},{}\n", e + 1, log.train_mse[e], log.val_mse[e]);
  }
}

}  // namespace mmf
