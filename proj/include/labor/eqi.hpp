#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labor/panel.hpp"

namespace labor {

enum class Orientation { positive, negative };

struct EqiIndicator {
  VariableId variable;
  Orientation orientation = Orientation::positive;
  double weight = 1.0;  // normalized to sum 1 before use
};

enum class RankScope { within_month, global };

struct EqiPenalty {
  VariableId a, b;      // raw-percentile sources
  double lambda = 0.0;  // in [0,1]
};

struct EqiSpec {
  std::vector<EqiIndicator> indicators;
  int window = 13;            // odd, for the pre-rank moving average
  double winsor_alpha = 0.01;
  RankScope rank_scope = RankScope::within_month;
  std::optional<EqiPenalty> penalty;
  int k_clusters = 5;
  std::vector<std::string> labels = {"Muy bajo", "Bajo", "Medio", "Alto", "Muy alto"};
};

struct EqiResult {
  std::map<RegionId, Series> eqi;  // monthly, values in [0,100]
  std::map<RegionId, double> long_run_mean;
  std::map<RegionId, std::string> cluster;
  std::map<RegionId, int> cluster_code;  // 1-based, lowest quality = 1
};

// Average-rank percentiles: rank / scope_size, ties averaged; in (0, 1].
std::map<RegionId, double> percentile_rank(const std::map<RegionId, double>& values,
                                           int scope_size);

// Per indicator: moving average -> winsorize -> percentile ranks (per the
// rank scope) -> orientation -> weighted sum x100 -> conflict penalty from
// the raw percentiles of the penalty pair.
EqiResult eqi_compute(const Panel& panel, const EqiSpec& spec);

// Quantile split of long-run means into |labels| ordered groups; ties go to
// the lower group.
std::map<RegionId, std::string> cluster_by_quantiles(
    const std::map<RegionId, double>& long_run_means, int k,
    const std::vector<std::string>& labels, std::map<RegionId, int>* codes = nullptr);

struct PeriodSpec {
  int year_start = 0;
  int year_end = 0;
};

// Mean EQI per region over each period, regions ranked descending (ties by
// region code).
std::map<std::string, std::vector<std::pair<RegionId, double>>> period_rankings(
    const EqiResult& eqi, const std::vector<PeriodSpec>& periods);

struct ShockSummary {
  double before_mean = 0, during_mean = 0, after_mean = 0;
  double delta_during = 0;  // during - before
  double delta_after = 0;   // after - before
};

ShockSummary shock_summary(const Series& series, MonthSpan before, MonthSpan during,
                           MonthSpan after);

void write_eqi_csv(const EqiResult& result, std::ostream& out);
void write_cluster_csv(const EqiResult& result,
                       const std::map<std::string, std::string>& region_names, std::ostream& out);
void write_rankings_csv(
    const std::map<std::string, std::vector<std::pair<RegionId, double>>>& rankings,
    std::ostream& out);

}  // namespace labor
