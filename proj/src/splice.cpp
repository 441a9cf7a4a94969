#include "labor/splice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "labor/csv.hpp"
#include "labor/errors.hpp"

namespace labor {

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    double r = 0.5 * (i + j) + 1.0;  // average of 1-based ranks i+1..j+1
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0 || vb == 0) return 0;
  return cov / std::sqrt(va * vb);
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DomainError("spearman: need two equal-length samples of size >= 2");
  return pearson(average_ranks(a), average_ranks(b));
}

double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DomainError("kendall: need two equal-length samples of size >= 2");
  const std::size_t n = a.size();
  long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double da = a[i] - a[j];
      double db = b[i] - b[j];
      if (da == 0 && db == 0) continue;
      if (da == 0) {
        ++ties_a;
      } else if (db == 0) {
        ++ties_b;
      } else if ((da > 0) == (db > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  double n0 = concordant + discordant;
  double denom = std::sqrt((n0 + ties_a) * (n0 + ties_b));
  if (denom == 0) return 0;
  return (concordant - discordant) / denom;
}

DonorMap donor_map(const RegionId& target, const VariableId& variable,
                   const Series& target_series,
                   const std::vector<std::pair<RegionId, const Series*>>& candidates,
                   int min_overlap) {
  bool found = false;
  DonorMap best;
  best.target = target;
  best.variable = variable;

  for (const auto& [region, series] : candidates) {
    if (region == target) continue;
    std::vector<double> a, b;
    for (const auto& [k, v] : target_series.points()) {
      auto w = series->get(k);
      if (w) {
        a.push_back(v);
        b.push_back(*w);
      }
    }
    int overlap = static_cast<int>(a.size());
    if (overlap < min_overlap) continue;
    double rho = spearman(a, b);
    bool better = !found || rho > best.spearman ||
                  (rho == best.spearman && (overlap > best.overlap_n ||
                                            (overlap == best.overlap_n && region < best.donor)));
    if (better) {
      best.donor = region;
      best.spearman = rho;
      best.kendall = kendall_tau_b(a, b);
      best.overlap_n = overlap;
      found = true;
    }
  }
  if (!found)
    throw NoDonorError("donor_map: no candidate with >= " + std::to_string(min_overlap) +
                       " overlapping observations for " + target.str() + "/" + variable.name);
  return best;
}

void write_donor_csv(const std::vector<DonorMap>& maps, std::ostream& out) {
  out << "target,variable,donor,spearman,kendall,overlap_n\n";
  for (const DonorMap& m : maps)
    out << m.target.code << ',' << m.variable.name << ',' << m.donor.code << ','
        << format_double(m.spearman) << ',' << format_double(m.kendall) << ',' << m.overlap_n
        << '\n';
}

Series backward_splice(const SpliceAnchor& anchor, const Series& proxy, MonthSpan span) {
  auto p_star = proxy.get(anchor.t_star);
  if (!p_star)
    throw DomainError("backward_splice: proxy missing at anchor " + anchor.t_star.str());
  if (*p_star == 0.0)
    throw DomainError("backward_splice: proxy is zero at the anchor (degenerate anchor)");

  Series out(proxy.frequency());
  auto emit = [&](MonthKey k) {
    auto p = proxy.get(k);
    if (!p) throw DomainError("backward_splice: proxy missing at " + k.str());
    out.set(k, anchor.anchor_value * (*p) / (*p_star));
  };
  if (proxy.frequency() == Frequency::annual) {
    for (int y = span.first.year; y <= span.last.year; ++y) emit(MonthKey::annual(y));
  } else {
    for (MonthKey k : month_range(span.first, span.last)) emit(k);
  }
  out.set(anchor.t_star, anchor.anchor_value);  // exact by construction
  return out;
}

Series annual_splice(const Series& monthly_synthetic, const Series& annual_benchmark,
                     ConversionRule rule) {
  if (monthly_synthetic.frequency() != Frequency::monthly)
    throw FrequencyError("annual_splice: synthetic series must be monthly");
  if (annual_benchmark.frequency() != Frequency::annual)
    throw FrequencyError("annual_splice: benchmark must be annual");

  Series out = monthly_synthetic;
  for (const auto& [key, benchmark] : annual_benchmark.points()) {
    const int year = key.year;
    double agg = 0;
    for (int m = 1; m <= 12; ++m) {
      auto v = monthly_synthetic.get({year, m});
      if (!v)
        throw DomainError("annual_splice: benchmark year " + std::to_string(year) +
                          " not fully covered by synthetic months");
      agg += *v;
    }
    if (rule == ConversionRule::average) agg /= 12.0;
    if (agg == 0.0)
      throw DomainError("annual_splice: zero synthetic aggregate in year " +
                        std::to_string(year) + " (degenerate year)");
    double factor = benchmark / agg;
    for (int m = 1; m <= 12; ++m) out.set({year, m}, monthly_synthetic.at({year, m}) * factor);
  }
  return out;
}

std::map<RegionId, Series> national_align(
    const std::vector<std::pair<RegionId, const Series*>>& members, const Series& national) {
  std::map<RegionId, Series> out;
  for (const auto& [region, series] : members) out.emplace(region, Series(series->frequency()));

  for (const auto& [month, total] : national.points()) {
    double sum = 0;
    for (const auto& [region, series] : members) {
      auto v = series->get(month);
      if (!v)
        throw DomainError("national_align: member " + region.str() + " missing at " +
                          month.str());
      sum += *v;
    }
    if (sum <= 0)
      throw DomainError("national_align: zero member sum at " + month.str() +
                        " (degenerate month)");
    double factor = total / sum;
    for (const auto& [region, series] : members)
      out.at(region).set(month, series->at(month) * factor);
  }
  return out;
}

ReconcileResult reconcile_informality(
    const std::vector<std::pair<RegionId, const Series*>>& rates,
    const std::vector<std::pair<RegionId, const Series*>>& employment,
    const Series& national_rate) {
  if (rates.size() != employment.size() || rates.empty())
    throw DomainError("reconcile_informality: rates/employment slices misaligned");
  const std::size_t n = rates.size();
  for (std::size_t d = 0; d < n; ++d)
    if (rates[d].first != employment[d].first)
      throw DomainError("reconcile_informality: region order mismatch between slices");

  ReconcileResult result;
  result.schedule.lambda.set_frequency(Frequency::monthly);
  for (const auto& [region, _] : rates) {
    result.calibrated_rates.emplace(region, Series(Frequency::monthly));
    result.calibrated_counts.emplace(region, Series(Frequency::monthly));
  }

  for (const auto& [month, nat_rate] : national_rate.points()) {
    std::vector<double> e(n), u_hat(n);
    double e_sum = 0, u_sum = 0;
    for (std::size_t d = 0; d < n; ++d) {
      auto r = rates[d].second->get(month);
      auto ev = employment[d].second->get(month);
      if (!r || !ev)
        throw DomainError("reconcile_informality: region " + rates[d].first.str() +
                          " missing at " + month.str());
      if (*r < 0 || *r > 1)
        throw DomainError("reconcile_informality: rate outside [0,1] for " +
                          rates[d].first.str() + " at " + month.str());
      if (*ev <= 0)
        throw DomainError("reconcile_informality: nonpositive employment for " +
                          rates[d].first.str() + " at " + month.str());
      e[d] = *ev;
      u_hat[d] = (*r) * (*ev);
      e_sum += e[d];
      u_sum += u_hat[d];
    }

    double target = nat_rate * e_sum;
    if (u_sum == 0.0) {
      if (target > 0)
        throw DomainError("reconcile_informality: zero implied counts with positive "
                          "national rate at " + month.str());
      result.schedule.lambda.set(month, 1.0);
      for (std::size_t d = 0; d < n; ++d) {
        result.calibrated_counts.at(rates[d].first).set(month, 0.0);
        result.calibrated_rates.at(rates[d].first).set(month, 0.0);
      }
      continue;
    }
    if (target > e_sum * (1 + 1e-12))
      throw ReconciliationCapacityError(
          "reconcile_informality: national rate implies more informal workers than total "
          "employment at " + month.str());

    double lambda = target / u_sum;
    std::vector<double> cal(n);
    for (std::size_t d = 0; d < n; ++d) cal[d] = lambda * u_hat[d];

    // Clip rates above 1 and push the excess onto unclipped regions in
    // proportion to employment.
    std::vector<bool> clipped(n, false);
    int iters = 0;
    for (; iters < 50; ++iters) {
      double excess = 0;
      bool any_new = false;
      for (std::size_t d = 0; d < n; ++d) {
        if (clipped[d]) continue;
        if (cal[d] > e[d]) {
          excess += cal[d] - e[d];
          cal[d] = e[d];
          clipped[d] = true;
          any_new = true;
        }
      }
      if (!any_new || excess == 0.0) break;
      double e_open = 0;
      for (std::size_t d = 0; d < n; ++d)
        if (!clipped[d]) e_open += e[d];
      if (e_open == 0.0)
        throw ReconciliationCapacityError(
            "reconcile_informality: redistribution has no unclipped capacity at " +
            month.str());
      for (std::size_t d = 0; d < n; ++d)
        if (!clipped[d]) cal[d] += excess * e[d] / e_open;
    }
    result.schedule.max_iterations_used = std::max(result.schedule.max_iterations_used, iters);
    for (std::size_t d = 0; d < n; ++d)
      if (cal[d] > e[d] * (1 + 1e-9))
        throw ReconciliationCapacityError(
            "reconcile_informality: redistribution did not converge at " + month.str());

    double cal_sum = 0;
    for (double v : cal) cal_sum += v;
    double residual = target > 0 ? (target - cal_sum) / target : 0.0;
    if (std::abs(residual) > 1e-10) result.schedule.residuals[month] = residual;

    result.schedule.lambda.set(month, lambda);
    for (std::size_t d = 0; d < n; ++d) {
      result.calibrated_counts.at(rates[d].first).set(month, cal[d]);
      result.calibrated_rates.at(rates[d].first).set(month, cal[d] / e[d]);
    }
  }
  return result;
}

void write_lambda_csv(const LambdaSchedule& schedule, std::ostream& out) {
  out << "date,lambda\n";
  for (const auto& [k, v] : schedule.lambda.points())
    out << k.str() << ',' << format_double(v) << '\n';
}

}  // namespace labor
