#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mmfusion/market_data.hpp"

namespace mmf {

/// Two coupled markets: the foreign close-to-close return u_t drives the
/// domestic return of the next shared date, r_{t+1} = coupling * u_t + eps.
struct SynthConfig {
  std::size_t n_days = 3000;
  double coupling = 1.0;
  double noise_sd = 0.0196;     // eps
  double domestic_sd = 0.002;   // domestic overnight gap (open vs previous close)
  double foreign_sd = 0.01;     // u
  double shape_sd = 0.002;      // high/low excursions and the foreign gap
  std::uint64_t seed = 1;
  Date start{std::chrono::year{2000}, std::chrono::January, std::chrono::day{3}};

  void validate() const;
};

struct SyntheticMarkets {
  AlignedPair pair;
  std::vector<double> foreign_returns;        // u_t, one per date
  std::vector<double> next_domestic_returns;  // r_{t+1} for t = 0 .. n-2
};

/// Builds weekday-dated OHLC bars whose return features reproduce the drawn
/// returns exactly: close_t = close_{t-1} (1 + r_t), open from a gap draw,
/// high/low widened around max/min(open, close).
SyntheticMarkets generate_coupled_markets(const SynthConfig& cfg);

/// Best achievable directional accuracy, P(sign(a u) == sign(a u + eps)),
/// estimated from `draws` Monte-Carlo samples. Without signal (a = 0 or
/// foreign_sd = 0) no forecast beats a coin flip and 0.5 is returned.
double oracle_hit_ratio(const SynthConfig& cfg, std::size_t draws = 1'000'000);

}  // namespace mmf
