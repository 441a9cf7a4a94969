#pragma once

#include <map>
#include <optional>
#include <vector>

#include "labor/errors.hpp"
#include "labor/month_key.hpp"

namespace labor {

enum class Frequency { monthly, annual };

const char* to_string(Frequency f);

// Ordered time series. Keys are strictly increasing by construction of the
// underlying map; values are always finite (set() rejects NaN/inf). Gaps are
// permitted and queryable. Annual series keep one key per year with the
// month-12 sentinel.
class Series {
 public:
  Series() = default;
  explicit Series(Frequency freq) : frequency_(freq) {}

  Frequency frequency() const { return frequency_; }
  void set_frequency(Frequency f) { frequency_ = f; }

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }

  // Rejects non-finite values and, for annual series, non-sentinel keys.
  void set(MonthKey key, double value);
  bool has(MonthKey key) const { return points_.count(key) != 0; }
  std::optional<double> get(MonthKey key) const;
  // Throws DomainError when the key is missing.
  double at(MonthKey key) const;
  void erase(MonthKey key) { points_.erase(key); }

  MonthKey first_key() const;
  MonthKey last_key() const;
  MonthSpan span() const { return {first_key(), last_key()}; }

  // True when every grid point of [first,last] (per frequency) is present.
  bool covers(MonthKey first, MonthKey last) const;
  std::vector<MonthKey> keys() const;
  std::vector<double> values() const;
  // Keys missing from the regular grid between first_key and last_key.
  std::vector<MonthKey> gaps() const;

  const std::map<MonthKey, double>& points() const { return points_; }

  // Restrict to [first, last].
  Series slice(MonthKey first, MonthKey last) const;

  bool operator==(const Series&) const = default;

 private:
  Frequency frequency_ = Frequency::monthly;
  std::map<MonthKey, double> points_;
};

// Series with every month of [first,last] equal to `value`.
Series constant_monthly(MonthKey first, MonthKey last, double value);

}  // namespace labor
