#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mmf {

using Date = std::chrono::year_month_day;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD). Throws DataError.
Date parse_date(std::string_view text);
std::string format_date(Date date);

/// One trading session. `close` holds the adjusted close.
struct OhlcBar {
  Date date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double volume = 0.0;
};

/// Throws DataError naming the bar's date if any price invariant is broken.
void validate_bar(const OhlcBar& bar);

struct MarketSeries {
  std::string market_id;
  std::vector<OhlcBar> bars;

  std::size_t size() const { return bars.size(); }
};

/// Validates every bar and the strictly increasing date order.
void validate_series(const MarketSeries& series);

/// Reads a daily CSV with header Date,Open,High,Low,Close,AdjClose,Volume.
/// AdjClose becomes the bar's close; the raw Close column is only validated.
MarketSeries parse_csv(const std::filesystem::path& path, std::string market_id);
MarketSeries parse_csv(std::istream& in, std::string market_id);

/// Writes the series in the same format parse_csv reads. Numbers use the
/// shortest representation that round-trips exactly.
void write_csv(std::ostream& out, const MarketSeries& series);
void write_csv(const std::filesystem::path& path, const MarketSeries& series);

/// Two markets restricted to their shared trading dates.
struct AlignedPair {
  MarketSeries domestic;
  MarketSeries foreign;
  std::vector<Date> dates;

  std::size_t size() const { return dates.size(); }
};

/// Keeps only the dates present in both series. Row d pairs the domestic and
/// foreign sessions of calendar date d.
AlignedPair align_calendars(const MarketSeries& domestic, const MarketSeries& foreign);

/// Restricts a pair to dates within [first, last] inclusive.
AlignedPair restrict_to_window(const AlignedPair& pair, Date first, Date last);

/// Half-open index range [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

struct DataSplit {
  IndexRange train;
  IndexRange validation;
  IndexRange test;

  std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

/// Chronological train/validation/test partition of n rows. The test block is
/// the tail n - floor(train_frac*n); validation is the tail of the remaining
/// block with size m - floor((1-val_frac_of_train)*m).
DataSplit chronological_split(std::size_t n, double train_frac = 0.7,
                              double val_frac_of_train = 0.3);

}  // namespace mmf
