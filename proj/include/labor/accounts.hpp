#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "labor/panel.hpp"

namespace labor {

// One region-month of the labor accounts, levels in persons and derived
// rates in [0,1].
struct LaborAccounts {
  double employed = 0, unemployed = 0, inactive = 0;
  double pea = 0, pet = 0, population = 0;
  double employment_rate = 0, unemployment_rate = 0;
  double participation_rate = 0, inactivity_rate = 0;
};

// Relative identity residuals, (lhs - rhs) / max(rhs, eps) with eps = 1e-12.
struct ResidualEntry {
  RegionId region;
  MonthKey month;
  double pea_residual = 0;  // pea vs employed + unemployed
  double pet_residual = 0;  // pet vs pea + inactive
  bool violation = false;   // either |residual| above tolerance
};

struct ResidualReport {
  std::vector<ResidualEntry> entries;
  double max_abs_relative = 0;
  double tolerance = 1e-3;

  bool all_within_tolerance() const { return max_abs_relative <= tolerance; }
  void to_json(std::ostream& out) const;
};

struct ClosureResult {
  Panel panel;
  ResidualReport report;
};

// Derives unemployed := pea - employed and inactive := pet - pea for every
// region-month where employed/pea/pet are present. Negative intermediates are
// clamped at zero with the deficit absorbed into pea (then pet), so totals
// are preserved and post-closure residuals are exactly zero. The report
// carries the pre-closure residuals. Default tolerance 1e-3 (±0.1%).
ClosureResult close_identities(const Panel& panel, double tolerance = 1e-3);

// Fills the four rates from levels. pet must be positive; unemployment rate
// is 0 by convention when pea = 0.
LaborAccounts derive_rates(LaborAccounts accounts);

struct AggregateResult {
  Series series;
  // Months missing from at least one member (within the union span).
  std::vector<MonthKey> gap_report;
};

// Pointwise sum over members on the intersection of spans. Refuses rates.
AggregateResult aggregate_regions(const Panel& panel, const VariableId& variable,
                                  const std::vector<RegionId>& members);

enum class ConversionRule { sum, average };

const char* to_string(ConversionRule rule);

struct AnnualizeResult {
  Series series;  // annual, month-12 sentinel keys
  std::vector<int> partial_years;
};

// Mean (average rule) or sum (sum rule) of the 12 months of each fully
// covered year; partial years are excluded and reported.
AnnualizeResult annualize(const Series& series, ConversionRule rule);

}  // namespace labor
