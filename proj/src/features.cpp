#include "mmfusion/features.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mmfusion/error.hpp"

namespace mmf {

std::string_view feature_name(Feature f) {
  switch (f) {
    case Feature::dhtc: return "dhtc";
    case Feature::dotc: return "dotc";
    case Feature::dltc: return "dltc";
    case Feature::octc: return "octc";
    case Feature::ootc: return "ootc";
  }
  return "?";
}

double FeatureVector::operator[](Feature f) const {
  switch (f) {
    case Feature::dhtc: return dhtc;
    case Feature::dotc: return dotc;
    case Feature::dltc: return dltc;
    case Feature::octc: return octc;
    case Feature::ootc: return ootc;
  }
  return 0.0;
}

std::array<double, kFeatureCount> FeatureVector::to_array() const {
  return {dhtc, dotc, dltc, octc, ootc};
}

FeatureVector compute_features(const OhlcBar& bar, const OhlcBar& prev) {
  if (!(prev.date < bar.date)) {
    throw DataError(fmt::format("compute_features: previous bar {} does not precede {}",
                                format_date(prev.date), format_date(bar.date)));
  }
  if (!(bar.close > 0.0) || !(prev.close > 0.0)) {
    throw DataError(fmt::format("{}: non-positive close", format_date(bar.date)));
  }
  FeatureVector f;
  f.dhtc = (bar.high - bar.close) / bar.close;
  f.dotc = (bar.open - bar.close) / bar.close;
  f.dltc = (bar.low - bar.close) / bar.close;
  f.octc = (bar.close - prev.close) / prev.close;
  f.ootc = (bar.open - prev.close) / prev.close;
  return f;
}

FeatureMatrix build_matrix(const AlignedPair& pair) {
  const std::size_t n = pair.size();
  if (n < 3) {
    throw DataError(fmt::format("build_matrix: need at least 3 aligned dates, got {}", n));
  }
  FeatureMatrix matrix;
  matrix.domestic_id = pair.domestic.market_id;
  matrix.foreign_id = pair.foreign.market_id;
  matrix.rows.reserve(n - 2);

  const auto& dom = pair.domestic.bars;
  const auto& fgn = pair.foreign.bars;
  for (std::size_t t = 1; t + 1 < n; ++t) {
    FeatureRow row;
    row.date = pair.dates[t];
    row.domestic = compute_features(dom[t], dom[t - 1]);
    row.foreign = compute_features(fgn[t], fgn[t - 1]);
    row.target = compute_features(dom[t + 1], dom[t]).octc;
    matrix.rows.push_back(row);
  }
  return matrix;
}

void write_matrix_csv(std::ostream& out, const FeatureMatrix& matrix) {
  out << "date";
  for (const auto* id : {&matrix.domestic_id, &matrix.foreign_id}) {
    std::string prefix = *id;
    std::transform(prefix.begin(), prefix.end(), prefix.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (auto f : kAllFeatures) out << ',' << prefix << '_' << feature_name(f);
  }
  out << ",target\n";
  for (const auto& row : matrix.rows) {
    out << format_date(row.date);
    for (std::size_t c = 0; c < kColumnCount; ++c) out << fmt::format(",{}", column_value(row, c));
    out << '\n';
  }
}

double column_value(const FeatureRow& row, std::size_t column) {
  if (column < kFeatureCount) return row.domestic[kAllFeatures[column]];
  if (column < 2 * kFeatureCount) return row.foreign[kAllFeatures[column - kFeatureCount]];
  if (column == kTargetColumn) return row.target;
  throw DataError(fmt::format("column {} out of range", column));
}

std::string format_range(ScalingRange range) {
  return fmt::format("[{},{}]", range.lo, range.hi);
}

ColumnScale fit_column(std::span<const double> train_values) {
  if (train_values.empty()) throw DataError("fit_column: no training values");
  const auto [lo, hi] = std::minmax_element(train_values.begin(), train_values.end());
  if (!(*hi > *lo)) {
    throw DataError(fmt::format("fit_column: constant training column (value {})", *lo));
  }
  return {*lo, *hi};
}

double MinMaxScaler::transform(double x, std::size_t column) const {
  const auto& c = columns.at(column);
  return (x - c.train_min) / (c.train_max - c.train_min) * (out.hi - out.lo) + out.lo;
}

double MinMaxScaler::inverse_transform(double y, std::size_t column) const {
  const auto& c = columns.at(column);
  return (y - out.lo) / (out.hi - out.lo) * (c.train_max - c.train_min) + c.train_min;
}

MinMaxScaler fit_scaler(const FeatureMatrix& matrix, const DataSplit& split, ScalingRange range) {
  if (!(range.hi > range.lo)) {
    throw DataError(fmt::format("fit_scaler: invalid output range {}", format_range(range)));
  }
  if (split.train.size() == 0 || split.train.end > matrix.size()) {
    throw DataError("fit_scaler: training range empty or outside the matrix");
  }
  MinMaxScaler scaler;
  scaler.out = range;
  std::vector<double> values(split.train.size());
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    for (std::size_t i = split.train.begin; i < split.train.end; ++i) {
      values[i - split.train.begin] = column_value(matrix.rows[i], c);
    }
    try {
      scaler.columns.push_back(fit_column(values));
    } catch (const DataError& e) {
      throw DataError(fmt::format("fit_scaler: column {}: {}", c, e.what()));
    }
  }
  return scaler;
}

ScaledDataset apply_scaler(const FeatureMatrix& matrix, const MinMaxScaler& scaler) {
  if (scaler.columns.size() != kColumnCount) throw DataError("apply_scaler: scaler not fitted");
  const auto n = static_cast<Eigen::Index>(matrix.size());
  ScaledDataset data;
  data.domestic.resize(n, kFeatureCount);
  data.foreign.resize(n, kFeatureCount);
  data.target.resize(n);
  data.raw_target.resize(n);
  data.scaler = scaler;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = matrix.rows[static_cast<std::size_t>(i)];
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const auto col = static_cast<Eigen::Index>(f);
      data.domestic(i, col) = scaler.transform(column_value(row, f), f);
      data.foreign(i, col) = scaler.transform(column_value(row, f + kFeatureCount), f + kFeatureCount);
    }
    data.target(i) = scaler.transform(row.target, kTargetColumn);
    data.raw_target(i) = row.target;
  }
  return data;
}

}  // namespace mmf
