#include "labor/eqi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "labor/csv.hpp"
#include "labor/errors.hpp"
#include "labor/smooth.hpp"

namespace labor {

std::map<RegionId, double> percentile_rank(const std::map<RegionId, double>& values,
                                           int scope_size) {
  if (values.empty()) throw DomainError("percentile_rank: empty input");
  if (scope_size < static_cast<int>(values.size()))
    throw DomainError("percentile_rank: scope smaller than the value set");

  std::vector<std::pair<RegionId, double>> items(values.begin(), values.end());
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });

  std::map<RegionId, double> ranks;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j + 1 < items.size() && items[j + 1].second == items[i].second) ++j;
    double avg_rank = 0.5 * (i + j) + 1.0;  // 1-based average rank of the tie run
    for (std::size_t t = i; t <= j; ++t) ranks[items[t].first] = avg_rank / scope_size;
    i = j + 1;
  }
  return ranks;
}

EqiResult eqi_compute(const Panel& panel, const EqiSpec& spec) {
  if (spec.indicators.empty()) throw DomainError("eqi: no indicators configured");
  double weight_sum = 0;
  for (const EqiIndicator& ind : spec.indicators) {
    if (ind.weight < 0) throw DomainError("eqi: negative weight for " + ind.variable.name);
    weight_sum += ind.weight;
  }
  if (weight_sum <= 0) throw DomainError("eqi: weights sum to zero");

  // Regions = everything carrying the first indicator.
  std::vector<RegionId> regions;
  for (const auto& [region, _] : panel.slice(spec.indicators.front().variable))
    regions.push_back(region);
  if (regions.empty()) throw CoverageError("eqi: no regions carry " +
                                           spec.indicators.front().variable.name);

  // Common span across all region/indicator series.
  MonthKey lo{std::numeric_limits<int>::min(), 1}, hi{std::numeric_limits<int>::max(), 12};
  auto series_of = [&](const RegionId& r, const VariableId& v) -> const Series& {
    const Series* s = panel.find(r, v);
    if (!s) throw CoverageError("eqi: region " + r.str() + " missing indicator " + v.name);
    return *s;
  };
  for (const RegionId& region : regions)
    for (const EqiIndicator& ind : spec.indicators) {
      const Series& s = series_of(region, ind.variable);
      if (s.empty()) throw CoverageError("eqi: empty series " + region.str() + "/" + ind.variable.name);
      lo = std::max(lo, s.first_key());
      hi = std::min(hi, s.last_key());
    }
  if (hi < lo) throw CoverageError("eqi: indicators share no common span");
  std::vector<MonthKey> grid = month_range(lo, hi);

  // Smooth + winsorize each (indicator, region) series over the common span;
  // winsorization pools all region-months of one indicator.
  struct Prepared {
    std::map<RegionId, std::vector<double>> values;  // per grid position
  };
  std::map<std::string, Prepared> prepared;
  auto prepare = [&](const VariableId& v) {
    if (prepared.count(v.name)) return;
    Prepared prep;
    std::vector<double> pool;
    std::map<RegionId, std::vector<double>> smoothed;
    for (const RegionId& region : regions) {
      Series s = series_of(region, v).slice(lo, hi);
      SmoothSpec sm;
      sm.window = std::min<int>(spec.window, static_cast<int>(s.size()) % 2 == 0
                                                 ? static_cast<int>(s.size()) - 1
                                                 : static_cast<int>(s.size()));
      if (sm.window < 1) sm.window = 1;
      std::vector<double> vals = moving_average(s, sm).values();
      pool.insert(pool.end(), vals.begin(), vals.end());
      smoothed[region] = std::move(vals);
    }
    double qlo = quantile_type7(pool, spec.winsor_alpha);
    double qhi = quantile_type7(pool, 1 - spec.winsor_alpha);
    for (auto& [region, vals] : smoothed) {
      for (double& x : vals) x = std::clamp(x, qlo, qhi);
      prep.values.emplace(region, std::move(vals));
    }
    prepared.emplace(v.name, std::move(prep));
  };
  for (const EqiIndicator& ind : spec.indicators) prepare(ind.variable);

  // Percentile ranks. within_month ranks regions at each month; global ranks
  // the pooled region-month set.
  auto raw_ranks = [&](const VariableId& v) {
    const Prepared& prep = prepared.at(v.name);
    std::map<RegionId, std::vector<double>> ranks;
    const std::size_t t_count = grid.size();
    if (spec.rank_scope == RankScope::within_month) {
      for (std::size_t t = 0; t < t_count; ++t) {
        std::map<RegionId, double> col;
        for (const RegionId& region : regions) col[region] = prep.values.at(region)[t];
        auto r = percentile_rank(col, static_cast<int>(regions.size()));
        for (const RegionId& region : regions) ranks[region].push_back(r.at(region));
      }
    } else {
      // Pooled average ranks over all (region, month) values.
      std::vector<std::pair<double, std::pair<std::size_t, std::size_t>>> flat;
      for (std::size_t g = 0; g < regions.size(); ++g)
        for (std::size_t t = 0; t < t_count; ++t)
          flat.push_back({prep.values.at(regions[g])[t], {g, t}});
      std::sort(flat.begin(), flat.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      for (const RegionId& region : regions) ranks[region].assign(t_count, 0.0);
      std::size_t i = 0;
      while (i < flat.size()) {
        std::size_t j = i;
        while (j + 1 < flat.size() && flat[j + 1].first == flat[i].first) ++j;
        double r = (0.5 * (i + j) + 1.0) / flat.size();
        for (std::size_t t = i; t <= j; ++t)
          ranks[regions[flat[t].second.first]][flat[t].second.second] = r;
        i = j + 1;
      }
    }
    return ranks;
  };

  std::map<std::string, std::map<RegionId, std::vector<double>>> rank_cache;
  for (const EqiIndicator& ind : spec.indicators)
    rank_cache[ind.variable.name] = raw_ranks(ind.variable);
  if (spec.penalty) {
    // Penalty sources need not be scored indicators; rank them too.
    for (const VariableId& v : {spec.penalty->a, spec.penalty->b})
      if (!rank_cache.count(v.name)) {
        prepare(v);
        rank_cache[v.name] = raw_ranks(v);
      }
  }

  EqiResult result;
  for (const RegionId& region : regions) {
    Series series(Frequency::monthly);
    double total = 0;
    for (std::size_t t = 0; t < grid.size(); ++t) {
      double base = 0;
      for (const EqiIndicator& ind : spec.indicators) {
        double r = rank_cache.at(ind.variable.name).at(region)[t];
        double s = ind.orientation == Orientation::positive ? r : 1.0 - r;
        base += (ind.weight / weight_sum) * s;
      }
      double value = 100.0 * base;
      if (spec.penalty) {
        double ra = rank_cache.at(spec.penalty->a.name).at(region)[t];
        double rb = rank_cache.at(spec.penalty->b.name).at(region)[t];
        double pi = 1.0 - spec.penalty->lambda * ra * rb;
        value *= pi;
      }
      series.set(grid[t], value);
      total += value;
    }
    result.long_run_mean[region] = total / static_cast<double>(grid.size());
    result.eqi.emplace(region, std::move(series));
  }

  int k = std::min<int>(spec.k_clusters, static_cast<int>(regions.size()));
  std::vector<std::string> labels(spec.labels.begin(),
                                  spec.labels.begin() + std::min<std::size_t>(spec.labels.size(), k));
  if (static_cast<int>(labels.size()) == k && k >= 1)
    result.cluster = cluster_by_quantiles(result.long_run_mean, k, labels, &result.cluster_code);
  return result;
}

std::map<RegionId, std::string> cluster_by_quantiles(
    const std::map<RegionId, double>& long_run_means, int k,
    const std::vector<std::string>& labels, std::map<RegionId, int>* codes) {
  if (k != static_cast<int>(labels.size()))
    throw DomainError("cluster_by_quantiles: k must equal the label count");
  if (k < 1 || k > static_cast<int>(long_run_means.size()))
    throw DomainError("cluster_by_quantiles: k outside [1, n]");

  std::vector<double> values;
  for (const auto& [_, v] : long_run_means) values.push_back(v);
  std::vector<double> thresholds;
  for (int j = 1; j < k; ++j)
    thresholds.push_back(quantile_type7(values, static_cast<double>(j) / k));

  std::map<RegionId, std::string> out;
  for (const auto& [region, v] : long_run_means) {
    int g = 0;
    for (double q : thresholds)
      if (v > q) ++g;  // ties stay in the lower group
    out[region] = labels[g];
    if (codes) (*codes)[region] = g + 1;
  }
  return out;
}

std::map<std::string, std::vector<std::pair<RegionId, double>>> period_rankings(
    const EqiResult& eqi, const std::vector<PeriodSpec>& periods) {
  std::map<std::string, std::vector<std::pair<RegionId, double>>> out;
  for (const PeriodSpec& p : periods) {
    std::vector<std::pair<RegionId, double>> means;
    for (const auto& [region, series] : eqi.eqi) {
      double sum = 0;
      int n = 0;
      for (const auto& [k, v] : series.points())
        if (k.year >= p.year_start && k.year <= p.year_end) {
          sum += v;
          ++n;
        }
      if (n > 0) means.emplace_back(region, sum / n);
    }
    if (means.empty())
      throw DomainError("period_rankings: period " + std::to_string(p.year_start) + "-" +
                        std::to_string(p.year_end) + " intersects no EQI months");
    std::sort(means.begin(), means.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;  // tie: region code order
    });
    out[std::to_string(p.year_start) + "-" + std::to_string(p.year_end)] = std::move(means);
  }
  return out;
}

ShockSummary shock_summary(const Series& series, MonthSpan before, MonthSpan during,
                           MonthSpan after) {
  auto window_mean = [&](MonthSpan w, const char* name) {
    double sum = 0;
    int n = 0;
    for (MonthKey k : month_range(w.first, w.last)) {
      auto v = series.get(k);
      if (v) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) throw DomainError(std::string("shock_summary: empty '") + name + "' window");
    return sum / n;
  };
  ShockSummary s;
  s.before_mean = window_mean(before, "before");
  s.during_mean = window_mean(during, "during");
  s.after_mean = window_mean(after, "after");
  s.delta_during = s.during_mean - s.before_mean;
  s.delta_after = s.after_mean - s.before_mean;
  return s;
}

void write_eqi_csv(const EqiResult& result, std::ostream& out) {
  out << "region,date,eqi\n";
  for (const auto& [region, series] : result.eqi)
    for (const auto& [k, v] : series.points())
      out << region.code << ',' << k.str() << ',' << format_double(v) << '\n';
}

void write_cluster_csv(const EqiResult& result,
                       const std::map<std::string, std::string>& region_names,
                       std::ostream& out) {
  out << "dep_code,dep_name,cluster_name,cluster_code\n";
  // Ordered by cluster code then region code, mirroring the published table.
  std::vector<std::pair<RegionId, int>> rows(result.cluster_code.begin(),
                                             result.cluster_code.end());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  for (const auto& [region, code] : rows) {
    auto it = region_names.find(region.code);
    out << region.code << ',' << (it != region_names.end() ? it->second : region.code) << ','
        << result.cluster.at(region) << ',' << code << '\n';
  }
}

void write_rankings_csv(
    const std::map<std::string, std::vector<std::pair<RegionId, double>>>& rankings,
    std::ostream& out) {
  out << "period,rank,region,mean_eqi\n";
  for (const auto& [period, rows] : rankings) {
    int rank = 1;
    for (const auto& [region, mean] : rows)
      out << period << ',' << rank++ << ',' << region.code << ',' << format_double(mean) << '\n';
  }
}

}  // namespace labor
