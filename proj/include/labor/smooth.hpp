#pragma once

#include <vector>

#include "labor/series.hpp"

namespace labor {

struct SmoothSpec {
  int window = 13;  // odd
};

// Centered moving average. Interior value at t is the mean over
// {t-(w-1)/2, ..., t+(w-1)/2}; edge positions carry the nearest fully
// computed value outward.
Series moving_average(const Series& series, const SmoothSpec& spec);

// Clamp to [q_alpha, q_{1-alpha}]; type-7 quantiles (linear interpolation
// between order statistics). Order preserved.
std::vector<double> winsorize(const std::vector<double>& values, double alpha);

// Type-7 quantile of unsorted values, p in [0,1].
double quantile_type7(std::vector<double> values, double p);

// Lower-interpolation median (sorted[(n-1)/2]).
double median_lower(std::vector<double> values);

// Rescale so the series' median over the stable span matches the reference
// ratio's median over the same span.
Series participation_rescale(const Series& series, const Series& reference_ratio,
                             MonthSpan stable_span);

struct SeasonalResult {
  Series adjusted;                  // input minus seasonal factors
  std::vector<double> factors;      // 12 month-of-year factors, Jan..Dec
  Series trend;                     // centered 2x12 trend, edges carried
};

// Classical additive decomposition: 13-term centered trend with half weights
// at the ends, month-of-year mean deviations as the seasonal component.
// adjusted + factor[month] reproduces the input exactly.
SeasonalResult seasonal_adjust(const Series& series);

}  // namespace labor
