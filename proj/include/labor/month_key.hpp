#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace labor {

// Calendar month key. Annual series store one key per year with the
// month-12 sentinel, so a single ordered key type carries both frequencies.
struct MonthKey {
  int year = 0;
  int month = 1;  // 1..12

  auto operator<=>(const MonthKey&) const = default;

  static MonthKey annual(int year) { return MonthKey{year, 12}; }

  // Linear month index, convenient for grids and distances.
  std::int64_t index() const { return static_cast<std::int64_t>(year) * 12 + (month - 1); }
  static MonthKey from_index(std::int64_t idx);

  MonthKey next() const { return from_index(index() + 1); }
  MonthKey prev() const { return from_index(index() - 1); }

  bool valid() const { return month >= 1 && month <= 12; }

  // "YYYY-MM"; annual() callers emit "YYYY" themselves.
  std::string str() const;
  // Accepts "YYYY-MM" and "YYYY" (annual sentinel).
  static std::optional<MonthKey> parse(const std::string& text);
};

// Inclusive month grid [first, last].
std::vector<MonthKey> month_range(MonthKey first, MonthKey last);

struct MonthSpan {
  MonthKey first;
  MonthKey last;
  bool contains(MonthKey k) const { return first <= k && k <= last; }
};

}  // namespace labor
