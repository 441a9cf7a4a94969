#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "labor/panel.hpp"

namespace labor {

struct SynthSpec {
  int n_regions = 6;
  int n_years = 10;
  int start_year = 2010;
  std::uint64_t seed = 42;
};

// Desk-scale fixture with known ground truth. The observed panel mimics the
// real data landscape: national annual aggregates over the whole span (with
// a deliberate level bias on the labor-force series), national monthly and
// departmental annual benchmarks over the later years, departmental monthly
// observations for a subset of regions, short city monthly windows, full
// macro covariates and demographic projections. The truth panel carries the
// hidden monthly series every stage is later scored against.
struct SyntheticFixture {
  Panel observed;
  Panel truth;
  std::vector<std::string> departments;
  std::vector<std::string> observed_departments;
  std::map<std::string, std::vector<std::string>> clusters;
  MonthSpan span;               // product span (years 0..n-1)
  int benchmark_start_year = 0; // departmental annual + national monthly coverage
  int dept_monthly_start_year = 0;
  int city_monthly_start_year = 0;
  int informality_start_year = 0;
};

SyntheticFixture generate_synthetic_panel(const SynthSpec& spec);

}  // namespace labor
