#include "mmfusion/market_data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "mmfusion/error.hpp"

namespace mmf {

namespace {

constexpr std::string_view kHeader = "Date,Open,High,Low,Close,AdjClose,Volume";

std::string_view trim_line_end(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

bool parse_number(std::string_view field, double& value) {
  if (field.empty()) return false;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last && std::isfinite(value);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

}  // namespace

Date parse_date(std::string_view text) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  auto bad = [&] { return DataError(fmt::format("invalid date '{}'", text)); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  auto part = [&](std::size_t pos, std::size_t len, auto& out) {
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    if (ec != std::errc() || ptr != text.data() + pos + len) throw bad();
  };
  part(0, 4, y);
  part(5, 2, m);
  part(8, 2, d);
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw bad();
  return date;
}

std::string format_date(Date date) {
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(date.year()),
                     static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
}

void validate_bar(const OhlcBar& bar) {
  const auto where = format_date(bar.date);
  if (!(bar.open > 0.0 && bar.high > 0.0 && bar.low > 0.0 && bar.close > 0.0)) {
    throw DataError(fmt::format("{}: prices must be strictly positive", where));
  }
  if (bar.high < bar.low) {
    throw DataError(fmt::format("{}: high {} below low {}", where, bar.high, bar.low));
  }
  if (bar.open < bar.low || bar.open > bar.high) {
    throw DataError(fmt::format("{}: open {} outside [low, high]", where, bar.open));
  }
  if (bar.close < bar.low || bar.close > bar.high) {
    throw DataError(fmt::format("{}: close {} outside [low, high]", where, bar.close));
  }
  if (!(bar.volume >= 0.0)) {
    throw DataError(fmt::format("{}: negative volume", where));
  }
}

void validate_series(const MarketSeries& series) {
  for (std::size_t i = 0; i < series.bars.size(); ++i) {
    validate_bar(series.bars[i]);
    if (i > 0 && series.bars[i].date <= series.bars[i - 1].date) {
      const bool dup = series.bars[i].date == series.bars[i - 1].date;
      throw DataError(fmt::format("{}: {} {}", series.market_id,
                                  dup ? "duplicate date" : "dates out of order at",
                                  format_date(series.bars[i].date)));
    }
  }
}

MarketSeries parse_csv(std::istream& in, std::string market_id) {
  MarketSeries series;
  series.market_id = std::move(market_id);

  std::string line;
  if (!std::getline(in, line)) throw DataError(series.market_id + ": empty CSV");
  std::string_view header = trim_line_end(line);
  if (header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
  if (header != kHeader) {
    throw DataError(fmt::format("{}: line 1: expected header '{}'", series.market_id, kHeader));
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim_line_end(line);
    if (row.empty()) continue;
    const auto fields = split_fields(row);
    if (fields.size() != 7) {
      throw DataError(fmt::format("{}: line {}: expected 7 fields, got {}", series.market_id,
                                  line_no, fields.size()));
    }
    OhlcBar bar;
    try {
      bar.date = parse_date(fields[0]);
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}: line {}: {}", series.market_id, line_no, e.what()));
    }
    std::array<double, 6> values{};
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (!parse_number(fields[k + 1], values[k])) {
        throw DataError(fmt::format("{}: line {}: missing or malformed {}", series.market_id,
                                    line_no, split_fields(kHeader)[k + 1]));
      }
    }
    const double raw_close = values[3];
    bar.open = values[0];
    bar.high = values[1];
    bar.low = values[2];
    bar.close = values[4];
    bar.volume = values[5];
    if (!(raw_close > 0.0)) {
      throw DataError(fmt::format("{}: {}: close must be strictly positive", series.market_id,
                                  format_date(bar.date)));
    }
    series.bars.push_back(bar);
  }
  validate_series(series);
  return series;
}

MarketSeries parse_csv(const std::filesystem::path& path, std::string market_id) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  return parse_csv(in, std::move(market_id));
}

void write_csv(std::ostream& out, const MarketSeries& series) {
  out << kHeader << '\n';
  for (const auto& bar : series.bars) {
    out << fmt::format("{},{},{},{},{},{},{}\n", format_date(bar.date), bar.open, bar.high,
                       bar.low, bar.close, bar.close, bar.volume);
  }
}

void write_csv(const std::filesystem::path& path, const MarketSeries& series) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  write_csv(out, series);
}

AlignedPair align_calendars(const MarketSeries& domestic, const MarketSeries& foreign) {
  if (domestic.bars.empty() || foreign.bars.empty()) {
    throw DataError("align_calendars: both series must be non-empty");
  }
  AlignedPair pair;
  pair.domestic.market_id = domestic.market_id;
  pair.foreign.market_id = foreign.market_id;

  auto a = domestic.bars.begin();
  auto b = foreign.bars.begin();
  while (a != domestic.bars.end() && b != foreign.bars.end()) {
    if (a->date < b->date) {
      ++a;
    } else if (b->date < a->date) {
      ++b;
    } else {
      pair.dates.push_back(a->date);
      pair.domestic.bars.push_back(*a++);
      pair.foreign.bars.push_back(*b++);
    }
  }
  if (pair.dates.empty()) {
    throw DataError(fmt::format("no shared trading dates between {} and {}", domestic.market_id,
                                foreign.market_id));
  }
  return pair;
}

AlignedPair restrict_to_window(const AlignedPair& pair, Date first, Date last) {
  AlignedPair out;
  out.domestic.market_id = pair.domestic.market_id;
  out.foreign.market_id = pair.foreign.market_id;
  for (std::size_t i = 0; i < pair.dates.size(); ++i) {
    if (pair.dates[i] < first || pair.dates[i] > last) continue;
    out.dates.push_back(pair.dates[i]);
    out.domestic.bars.push_back(pair.domestic.bars[i]);
    out.foreign.bars.push_back(pair.foreign.bars[i]);
  }
  return out;
}

DataSplit chronological_split(std::size_t n, double train_frac, double val_frac_of_train) {
  if (!(train_frac > 0.0 && train_frac < 1.0) ||
      !(val_frac_of_train > 0.0 && val_frac_of_train < 1.0)) {
    throw DataError("chronological_split: fractions must lie in (0, 1)");
  }
  if (n < 10) {
    throw DataError(fmt::format("chronological_split: need at least 10 rows, got {}", n));
  }
  // The epsilon absorbs representation error, e.g. 0.7 * 100 landing just below 70.
  auto floor_frac = [](double frac, std::size_t count) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(count) + 1e-9));
  };
  const std::size_t development = floor_frac(train_frac, n);
  const std::size_t train = floor_frac(1.0 - val_frac_of_train, development);

  DataSplit split;
  split.train = {0, train};
  split.validation = {train, development};
  split.test = {development, n};
  if (split.train.size() == 0 || split.validation.size() == 0 || split.test.size() == 0) {
    throw DataError(fmt::format("chronological_split: {} rows leave an empty partition", n));
  }
  return split;
}

}  // namespace mmf
