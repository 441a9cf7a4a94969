#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "labor/accounts.hpp"
#include "labor/panel.hpp"

namespace labor {

// Rank statistics on paired samples. Spearman uses average ranks for ties;
// Kendall is tau-b.
double spearman(const std::vector<double>& a, const std::vector<double>& b);
double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b);

struct DonorMap {
  RegionId target;
  VariableId variable;
  RegionId donor;
  double spearman = 0;
  double kendall = 0;
  int overlap_n = 0;
};

// Picks the candidate with the highest Spearman correlation against the
// target over the common window. Candidates with fewer than min_overlap
// common observations are excluded; ties break by larger overlap, then by
// region code order.
DonorMap donor_map(const RegionId& target, const VariableId& variable,
                   const Series& target_series,
                   const std::vector<std::pair<RegionId, const Series*>>& candidates,
                   int min_overlap = 10);

void write_donor_csv(const std::vector<DonorMap>& maps, std::ostream& out);

struct SpliceAnchor {
  MonthKey t_star;
  double anchor_value = 0;
};

// output(t) = anchor * proxy(t) / proxy(t_star) over [span.first, span.last]
// plus the anchor month itself.
Series backward_splice(const SpliceAnchor& anchor, const Series& proxy, MonthSpan span);

// Per benchmark year, scale the 12 synthetic months so their annual
// aggregate (mean or sum per rule) reproduces the benchmark exactly.
// Years without a benchmark pass through unchanged.
Series annual_splice(const Series& monthly_synthetic, const Series& annual_benchmark,
                     ConversionRule rule);

// Proportional monthly adjustment so members sum to the national series at
// every month where it is defined. Preserves within-month proportions.
std::map<RegionId, Series> national_align(
    const std::vector<std::pair<RegionId, const Series*>>& members, const Series& national);

struct LambdaSchedule {
  Series lambda;  // monthly, lambda_t > 0
  // Months where clipping left a residual (relative, should be ~0).
  std::map<MonthKey, double> residuals;
  int max_iterations_used = 0;
};

struct ReconcileResult {
  LambdaSchedule schedule;
  std::map<RegionId, Series> calibrated_rates;
  std::map<RegionId, Series> calibrated_counts;
};

// Scales implied informal counts rate*employment so their sum matches
// national_rate * total employment each month. Rates pushed above 1 are
// clipped with the excess redistributed across unclipped regions in
// proportion to employment, iterating to convergence.
ReconcileResult reconcile_informality(
    const std::vector<std::pair<RegionId, const Series*>>& rates,
    const std::vector<std::pair<RegionId, const Series*>>& employment,
    const Series& national_rate);

void write_lambda_csv(const LambdaSchedule& schedule, std::ostream& out);

}  // namespace labor
