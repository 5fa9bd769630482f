#include "mmfusion/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mmfusion/error.hpp"

namespace mmf {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw DataError(fmt::format("{}: length mismatch ({} vs {})", what, a.size(), b.size()));
  }
  if (a.empty()) throw DataError(fmt::format("{}: empty input", what));
}

}  // namespace

EvalReport hit_ratio(std::span<const double> predictions, std::span<const double> actuals) {
  check_pair(predictions, actuals, "hit_ratio");
  EvalReport report;
  report.n_days = predictions.size();
  report.hits.reserve(predictions.size());
  std::size_t hits = 0;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const int p = predictions[t] * actuals[t] > 0.0 ? 1 : 0;
    report.hits.push_back(p);
    hits += static_cast<std::size_t>(p);
  }
  report.hit_ratio = static_cast<double>(hits) / static_cast<double>(report.n_days);
  return report;
}

double mse_report(std::span<const double> predictions, std::span<const double> actuals) {
  check_pair(predictions, actuals, "mse_report");
  double sum = 0.0;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const double e = predictions[t] - actuals[t];
    sum += e * e;
  }
  return sum / static_cast<double>(predictions.size());
}

EvalReport evaluate_forecast(std::span<const double> predictions, std::span<const double> actuals) {
  EvalReport report = hit_ratio(predictions, actuals);
  report.mse = mse_report(predictions, actuals);
  return report;
}

EvalReport baseline_momentum_domestic(std::span<const double> domestic_returns) {
  if (domestic_returns.size() < 2) throw DataError("momentum baseline needs at least 2 returns");
  return hit_ratio(domestic_returns.first(domestic_returns.size() - 1), domestic_returns.subspan(1));
}

EvalReport baseline_momentum_foreign(std::span<const double> foreign_returns,
                                     std::span<const double> domestic_next_returns) {
  check_pair(foreign_returns, domestic_next_returns, "foreign momentum baseline");
  return hit_ratio(foreign_returns, domestic_next_returns);
}

EvalReport baseline_buy_hold(std::span<const double> domestic_returns) {
  const std::vector<double> rise(domestic_returns.size(), 1.0);
  return hit_ratio(rise, domestic_returns);
}

RegressionFit ols_fit(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "ols_fit");
  if (x.size() < 2) throw DataError("ols_fit: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DataError("ols_fit: x is constant");
  RegressionFit fit;
  fit.beta1 = sxy / sxx;
  fit.beta0 = my - fit.beta1 * mx;
  return fit;
}

ConfidenceInterval bootstrap_ci(std::span<const double> x, std::span<const double> y,
                                std::size_t n_boot, double level, std::uint64_t seed) {
  check_pair(x, y, "bootstrap_ci");
  if (x.size() < 3) throw DataError("bootstrap_ci: need at least 3 points");
  if (n_boot < 1) throw DataError("bootstrap_ci: n_boot must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw DataError("bootstrap_ci: level outside (0, 1)");
  ols_fit(x, y);  // rejects constant x up front, otherwise redraws could never end

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  std::vector<double> bx(x.size());
  std::vector<double> by(y.size());
  std::vector<double> slopes;
  slopes.reserve(n_boot);
  while (slopes.size() < n_boot) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto k = pick(rng);
      bx[i] = x[k];
      by[i] = y[k];
    }
    if (std::all_of(bx.begin(), bx.end(), [&](double v) { return v == bx.front(); })) continue;
    slopes.push_back(ols_fit(bx, by).beta1);
  }
  std::sort(slopes.begin(), slopes.end());

  // Linear interpolation between order statistics.
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(slopes.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, slopes.size() - 1);
    return slopes[lo] + (pos - static_cast<double>(lo)) * (slopes[hi] - slopes[lo]);
  };
  const double tail = (1.0 - level) / 2.0;
  return {quantile(tail), quantile(1.0 - tail)};
}

RegressionFit fit_with_ci(std::span<const double> x, std::span<const double> y,
                          std::size_t n_boot, double level, std::uint64_t seed) {
  RegressionFit fit = ols_fit(x, y);
  const auto ci = bootstrap_ci(x, y, n_boot, level, seed);
  fit.ci_low = ci.low;
  fit.ci_high = ci.high;
  fit.n_boot = n_boot;
  fit.degenerate_ci = n_boot < 2;
  return fit;
}

}  // namespace mmf
