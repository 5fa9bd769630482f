#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmfusion/market_data.hpp"

namespace mmf {

inline constexpr std::size_t kFeatureCount = 5;

enum class Feature { dhtc, dotc, dltc, octc, ootc };

inline constexpr std::array<Feature, kFeatureCount> kAllFeatures = {
    Feature::dhtc, Feature::dotc, Feature::dltc, Feature::octc, Feature::ootc};

std::string_view feature_name(Feature f);

/// Daily return ratios of one market. Daytime ratios are relative to today's
/// close, overnight ratios to the previous close.
struct FeatureVector {
  double dhtc = 0.0;  // (high - close) / close
  double dotc = 0.0;  // (open - close) / close
  double dltc = 0.0;  // (low - close) / close
  double octc = 0.0;  // (close - prev close) / prev close
  double ootc = 0.0;  // (open - prev close) / prev close

  double operator[](Feature f) const;
  std::array<double, kFeatureCount> to_array() const;
};

FeatureVector compute_features(const OhlcBar& bar, const OhlcBar& prev);

struct FeatureRow {
  Date date;
  FeatureVector domestic;
  FeatureVector foreign;
  double target = 0.0;  // domestic close-to-close return on the next shared date
};

struct FeatureMatrix {
  std::string domestic_id;
  std::string foreign_id;
  std::vector<FeatureRow> rows;

  std::size_t size() const { return rows.size(); }
};

/// One row per aligned date that has both a previous date (for the lagged
/// close) and a next date (for the target): |dates| - 2 rows.
FeatureMatrix build_matrix(const AlignedPair& pair);

/// CSV: date,<dom>_dhtc..<dom>_ootc,<for>_dhtc..<for>_ootc,target.
void write_matrix_csv(std::ostream& out, const FeatureMatrix& matrix);

// Scaler columns: 0-4 domestic features, 5-9 foreign features, 10 target.
inline constexpr std::size_t kColumnCount = 2 * kFeatureCount + 1;
inline constexpr std::size_t kTargetColumn = 2 * kFeatureCount;

double column_value(const FeatureRow& row, std::size_t column);

struct ScalingRange {
  double lo = -1.0;
  double hi = 1.0;

  bool operator==(const ScalingRange&) const = default;
};

std::string format_range(ScalingRange range);

struct ColumnScale {
  double train_min = 0.0;
  double train_max = 0.0;

  bool operator==(const ColumnScale&) const = default;
};

/// Extrema of a training column. Throws DataError if the column is empty or constant.
ColumnScale fit_column(std::span<const double> train_values);

/// Affine min-max map fitted on training rows; values outside the training
/// range extrapolate linearly.
struct MinMaxScaler {
  ScalingRange out;
  std::vector<ColumnScale> columns;

  double transform(double x, std::size_t column) const;
  double inverse_transform(double y, std::size_t column) const;

  bool operator==(const MinMaxScaler&) const = default;
};

MinMaxScaler fit_scaler(const FeatureMatrix& matrix, const DataSplit& split, ScalingRange range);

/// Scaled model inputs plus the raw target for denormalized metrics.
struct ScaledDataset {
  Eigen::MatrixXd domestic;  // n x 5
  Eigen::MatrixXd foreign;   // n x 5
  Eigen::VectorXd target;    // n, scaled
  Eigen::VectorXd raw_target;
  MinMaxScaler scaler;

  std::size_t size() const { return static_cast<std::size_t>(target.size()); }
};

ScaledDataset apply_scaler(const FeatureMatrix& matrix, const MinMaxScaler& scaler);

}  // namespace mmf
