#pragma once

#include <sstream>
#include <string>

#include "mmfusion/market_data.hpp"

namespace mmf::testing {

inline Date day(int y, unsigned m, unsigned d) {
  return Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
}

inline OhlcBar bar(Date date, double open, double high, double low, double close, double volume = 1000) {
  return OhlcBar{date, open, high, low, close, volume};
}

inline MarketSeries series_from_csv(const std::string& body, const std::string& id = "KO") {
  std::istringstream in("Date,Open,High,Low,Close,AdjClose,Volume\n" + body);
  return parse_csv(in, id);
}

/// Flat series with the given dates (day-of-month in January 2006).
inline MarketSeries flat_series(std::initializer_list<unsigned> days, const std::string& id) {
  MarketSeries s;
  s.market_id = id;
  for (auto d : days) s.bars.push_back(bar(day(2006, 1, d), 100, 101, 99, 100));
  return s;
}

}  // namespace mmf::testing
