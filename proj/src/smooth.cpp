#include "labor/smooth.hpp"

#include <algorithm>
#include <cmath>

#include "labor/errors.hpp"

namespace labor {

Series moving_average(const Series& series, const SmoothSpec& spec) {
  if (series.frequency() != Frequency::monthly)
    throw FrequencyError("moving_average: input must be monthly");
  if (spec.window < 1 || spec.window % 2 == 0)
    throw DomainError("moving_average: window must be odd and >= 1");
  const int n = static_cast<int>(series.size());
  if (spec.window > n) throw DomainError("moving_average: window exceeds series length");
  if (!series.gaps().empty()) throw DomainError("moving_average: series has gaps");

  std::vector<MonthKey> keys = series.keys();
  std::vector<double> v = series.values();
  const int half = (spec.window - 1) / 2;
  std::vector<double> out(n);
  for (int t = half; t < n - half; ++t) {
    double sum = 0;
    for (int j = t - half; j <= t + half; ++j) sum += v[j];
    out[t] = sum / spec.window;
  }
  // Nearest-fill: carry the first/last computed value outward.
  for (int t = 0; t < half; ++t) out[t] = out[half];
  for (int t = n - half; t < n; ++t) out[t] = out[n - half - 1];

  Series result(Frequency::monthly);
  for (int t = 0; t < n; ++t) result.set(keys[t], out[t]);
  return result;
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("quantile of empty input");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  double h = p * (static_cast<double>(values.size()) - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double median_lower(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of empty input");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

std::vector<double> winsorize(const std::vector<double>& values, double alpha) {
  if (values.empty()) throw DomainError("winsorize: empty input");
  if (alpha < 0 || alpha >= 0.5) throw DomainError("winsorize: alpha must be in [0, 0.5)");
  if (alpha == 0) return values;
  double lo = quantile_type7(values, alpha);
  double hi = quantile_type7(values, 1 - alpha);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::clamp(values[i], lo, hi);
  return out;
}

Series participation_rescale(const Series& series, const Series& reference_ratio,
                             MonthSpan stable_span) {
  std::vector<double> s_vals, r_vals;
  for (MonthKey k : month_range(stable_span.first, stable_span.last)) {
    auto sv = series.get(k);
    auto rv = reference_ratio.get(k);
    if (!sv || !rv)
      throw DomainError("participation_rescale: stable span not covered at " + k.str());
    s_vals.push_back(*sv);
    r_vals.push_back(*rv);
  }
  double s_med = median_lower(s_vals);
  double r_med = median_lower(r_vals);
  if (s_med == 0.0)
    throw DomainError("participation_rescale: zero series median over stable span");
  double alpha = r_med / s_med;

  Series out(series.frequency());
  for (const auto& [k, v] : series.points()) out.set(k, v * alpha);
  return out;
}

SeasonalResult seasonal_adjust(const Series& series) {
  if (series.frequency() != Frequency::monthly)
    throw FrequencyError("seasonal_adjust: input must be monthly");
  const int n = static_cast<int>(series.size());
  if (n < 24) throw DomainError("seasonal_adjust: need >= 24 months");
  if (!series.gaps().empty()) throw DomainError("seasonal_adjust: series has gaps");

  std::vector<MonthKey> keys = series.keys();
  std::vector<double> v = series.values();

  // 2x12 centered trend: 13 terms, half weight at the ends. Kills exact
  // period-12 components.
  std::vector<double> trend(n);
  for (int t = 6; t < n - 6; ++t) {
    double sum = 0.5 * v[t - 6] + 0.5 * v[t + 6];
    for (int j = t - 5; j <= t + 5; ++j) sum += v[j];
    trend[t] = sum / 12.0;
  }
  for (int t = 0; t < 6; ++t) trend[t] = trend[6];
  for (int t = n - 6; t < n; ++t) trend[t] = trend[n - 7];

  // Month-of-year means of the detrended series.
  double sums[12] = {0};
  int counts[12] = {0};
  for (int t = 0; t < n; ++t) {
    int m = keys[t].month - 1;
    sums[m] += v[t] - trend[t];
    ++counts[m];
  }
  SeasonalResult result;
  result.factors.resize(12);
  for (int m = 0; m < 12; ++m) result.factors[m] = counts[m] ? sums[m] / counts[m] : 0.0;

  result.adjusted.set_frequency(Frequency::monthly);
  result.trend.set_frequency(Frequency::monthly);
  for (int t = 0; t < n; ++t) {
    result.adjusted.set(keys[t], v[t] - result.factors[keys[t].month - 1]);
    result.trend.set(keys[t], trend[t]);
  }
  return result;
}

}  // namespace labor
