#include "mmfusion/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mmfusion/error.hpp"

namespace mmf {

void SynthConfig::validate() const {
  if (n_days < 10) throw ConfigError(fmt::format("synthetic n_days {} < 10", n_days));
  if (!(noise_sd >= 0.0 && domestic_sd >= 0.0 && foreign_sd >= 0.0 && shape_sd >= 0.0)) {
    throw ConfigError("synthetic standard deviations must be >= 0");
  }
  if (!std::isfinite(coupling)) throw ConfigError("synthetic coupling must be finite");
  if (!start.ok()) throw ConfigError("synthetic start date invalid");
}

namespace {

double draw_normal(std::mt19937_64& rng, double sd) {
  if (sd == 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sd)(rng);
}

std::vector<Date> weekdays(Date start, std::size_t count) {
  using namespace std::chrono;
  std::vector<Date> out;
  sys_days day{start};
  while (out.size() < count) {
    const weekday wd{day};
    if (wd != Saturday && wd != Sunday) out.emplace_back(day);
    day += days{1};
  }
  return out;
}

OhlcBar make_bar(Date date, double prev_close, double ret, double gap, double up, double down) {
  OhlcBar bar;
  bar.date = date;
  bar.close = prev_close * (1.0 + ret);
  bar.open = prev_close * (1.0 + gap);
  bar.high = std::max(bar.open, bar.close) * (1.0 + std::abs(up));
  bar.low = std::min(bar.open, bar.close) * (1.0 - std::abs(down));
  bar.volume = 1e6;
  return bar;
}

}  // namespace

SyntheticMarkets generate_coupled_markets(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = cfg.n_days;

  SyntheticMarkets out;
  out.pair.domestic.market_id = "SYN_DOM";
  out.pair.foreign.market_id = "SYN_FOR";
  out.pair.dates = weekdays(cfg.start, n);
  out.foreign_returns.resize(n);
  out.next_domestic_returns.resize(n - 1);

  double dom_close = 100.0;
  double for_close = 100.0;
  double prev_u = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double u = draw_normal(rng, cfg.foreign_sd);
    const double eps = draw_normal(rng, cfg.noise_sd);
    // Day 0 has no previous close; its bars start from the reference level.
    const double r = t == 0 ? 0.0 : cfg.coupling * prev_u + eps;
    const double foreign_r = t == 0 ? 0.0 : u;
    if (1.0 + r <= 0.0 || 1.0 + foreign_r <= 0.0) {
      throw ConfigError("synthetic return below -100%; reduce the standard deviations");
    }
    const double dom_gap = draw_normal(rng, cfg.domestic_sd);
    const double for_gap = draw_normal(rng, cfg.shape_sd);
    const double h1 = draw_normal(rng, cfg.shape_sd);
    const double l1 = draw_normal(rng, cfg.shape_sd);
    const double h2 = draw_normal(rng, cfg.shape_sd);
    const double l2 = draw_normal(rng, cfg.shape_sd);

    const Date date = out.pair.dates[t];
    out.pair.domestic.bars.push_back(make_bar(date, dom_close, r, dom_gap, h1, l1));
    out.pair.foreign.bars.push_back(make_bar(date, for_close, foreign_r, for_gap, h2, l2));
    dom_close = out.pair.domestic.bars.back().close;
    for_close = out.pair.foreign.bars.back().close;

    out.foreign_returns[t] = foreign_r;
    if (t > 0) out.next_domestic_returns[t - 1] = r;
    prev_u = foreign_r;
  }
  validate_series(out.pair.domestic);
  validate_series(out.pair.foreign);
  return out;
}

double oracle_hit_ratio(const SynthConfig& cfg, std::size_t draws) {
  cfg.validate();
  if (cfg.coupling == 0.0 || cfg.foreign_sd == 0.0) return 0.5;
  if (draws == 0) throw ConfigError("oracle_hit_ratio: draws must be >= 1");
  std::mt19937_64 rng(cfg.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double signal = cfg.coupling * draw_normal(rng, cfg.foreign_sd);
    const double realized = signal + draw_normal(rng, cfg.noise_sd);
    if (signal * realized > 0.0) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(draws);
}

}  // namespace mmf
