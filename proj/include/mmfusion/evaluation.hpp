#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mmf {

/// Directional accuracy and error of one set of return forecasts.
struct EvalReport {
  double hit_ratio = 0.0;
  double mse = 0.0;
  std::size_t n_days = 0;
  std::vector<int> hits;  // P_t: 1 iff predicted * actual > 0
};

/// P_t = 1 iff prediction * actual > 0; zero products score 0.
EvalReport hit_ratio(std::span<const double> predictions, std::span<const double> actuals);

double mse_report(std::span<const double> predictions, std::span<const double> actuals);

/// Hit ratio plus MSE for denormalized forecasts.
EvalReport evaluate_forecast(std::span<const double> predictions, std::span<const double> actuals);

/// Tomorrow moves like today's domestic return: scores r_t against r_{t+1}.
EvalReport baseline_momentum_domestic(std::span<const double> domestic_returns);

/// Tomorrow's domestic return follows today's foreign return. Both inputs are
/// already paired: foreign_returns[i] forecasts domestic_next_returns[i].
EvalReport baseline_momentum_foreign(std::span<const double> foreign_returns,
                                     std::span<const double> domestic_next_returns);

/// Always predicts a rise.
EvalReport baseline_buy_hold(std::span<const double> domestic_returns);

struct RegressionFit {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_boot = 0;
  bool degenerate_ci = false;  // fewer than two bootstrap replicates
};

/// Least-squares line y = beta0 + beta1 x. Throws DataError for constant x.
RegressionFit ols_fit(std::span<const double> x, std::span<const double> y);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
};

/// Pairs bootstrap percentile interval for the OLS slope. Resamples with
/// constant x are redrawn.
ConfidenceInterval bootstrap_ci(std::span<const double> x, std::span<const double> y,
                                std::size_t n_boot, double level, std::uint64_t seed);

/// OLS point estimates plus the bootstrap interval for the slope.
RegressionFit fit_with_ci(std::span<const double> x, std::span<const double> y,
                          std::size_t n_boot, double level, std::uint64_t seed);

}  // namespace mmf
