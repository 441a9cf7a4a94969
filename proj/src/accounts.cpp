#include "labor/accounts.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "labor/csv.hpp"
#include "labor/errors.hpp"

namespace labor {

namespace {
constexpr double kResidualEps = 1e-12;

double rel_residual(double lhs, double rhs) {
  return (lhs - rhs) / std::max(rhs, kResidualEps);
}
}  // namespace

void ResidualReport::to_json(std::ostream& out) const {
  out << "{\n  \"tolerance\": " << format_double(tolerance)
      << ",\n  \"max_abs_relative\": " << format_double(max_abs_relative)
      << ",\n  \"entries\": [\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ResidualEntry& e = entries[i];
    out << "    {\"region\": \"" << e.region.code << "\", \"month\": \"" << e.month.str()
        << "\", \"pea_residual\": " << format_double(e.pea_residual)
        << ", \"pet_residual\": " << format_double(e.pet_residual)
        << ", \"violation\": " << (e.violation ? "true" : "false") << "}";
    out << (i + 1 < entries.size() ? ",\n" : "\n");
  }
  out << "  ]\n}\n";
}

ClosureResult close_identities(const Panel& panel, double tolerance) {
  if (tolerance <= 0) throw DomainError("close_identities: tolerance must be positive");

  ClosureResult result;
  result.panel = panel;
  result.report.tolerance = tolerance;

  // Regions that carry an employed series are the closure targets.
  std::set<RegionId> regions;
  for (const auto& [key, _] : panel.entries())
    if (key.second == var::employed) regions.insert(key.first);

  for (const RegionId& region : regions) {
    const Series* employed = panel.find(region, var::employed);
    const Series* pea = panel.find(region, var::pea);
    const Series* pet = panel.find(region, var::pet);
    if (!pea || !pet)
      throw IncompleteAccountsError("close_identities: region " + region.str() +
                                    " lacks " + std::string(!pea ? "pea" : "pet"));
    const Series* unemployed = panel.find(region, var::unemployed);
    const Series* inactive = panel.find(region, var::inactive);
    const Series* population = panel.find(region, var::population);

    Series new_unemployed(employed->frequency());
    Series new_inactive(employed->frequency());
    Series new_pea(employed->frequency());
    Series new_pet(employed->frequency());

    for (const auto& [month, e_val] : employed->points()) {
      auto pea_val = pea->get(month);
      auto pet_val = pet->get(month);
      if (!pea_val || !pet_val)
        throw IncompleteAccountsError("close_identities: region " + region.str() +
                                      " missing pea/pet at " + month.str());

      // Pre-closure residuals against whatever unemployed/inactive exist;
      // absent series count as zero.
      double u_pre = unemployed ? unemployed->get(month).value_or(0.0) : 0.0;
      double i_pre = inactive ? inactive->get(month).value_or(0.0) : 0.0;
      ResidualEntry entry;
      entry.region = region;
      entry.month = month;
      entry.pea_residual = rel_residual(*pea_val, e_val + u_pre);
      entry.pet_residual = rel_residual(*pet_val, *pea_val + i_pre);
      entry.violation = std::abs(entry.pea_residual) > tolerance ||
                        std::abs(entry.pet_residual) > tolerance;
      result.report.max_abs_relative =
          std::max({result.report.max_abs_relative, std::abs(entry.pea_residual),
                    std::abs(entry.pet_residual)});
      result.report.entries.push_back(entry);

      // Closure: clamp negatives at zero, absorb the deficit into the
      // aggregate, re-derive.
      double p = *pea_val;
      double t = *pet_val;
      double u = p - e_val;
      if (u < 0) {
        u = 0;
        p = e_val;
      }
      double ina = t - p;
      if (ina < 0) {
        ina = 0;
        t = p;
      }
      if (population) {
        auto pop = population->get(month);
        if (pop && t > *pop * (1.0 + 1e-12))
          throw IdentityViolationError("close_identities: pet exceeds population for " +
                                       region.str() + " at " + month.str());
      }
      new_unemployed.set(month, u);
      new_inactive.set(month, ina);
      new_pea.set(month, p);
      new_pet.set(month, t);
    }

    result.panel.put(region, var::unemployed, std::move(new_unemployed));
    result.panel.put(region, var::inactive, std::move(new_inactive));
    result.panel.put(region, var::pea, std::move(new_pea));
    result.panel.put(region, var::pet, std::move(new_pet));
  }
  return result;
}

LaborAccounts derive_rates(LaborAccounts a) {
  if (a.pet <= 0) throw DomainError("derive_rates: pet must be positive");
  a.employment_rate = a.employed / a.pet;
  a.participation_rate = a.pea / a.pet;
  a.inactivity_rate = a.inactive / a.pet;
  a.unemployment_rate = a.pea > 0 ? a.unemployed / a.pea : 0.0;
  return a;
}

AggregateResult aggregate_regions(const Panel& panel, const VariableId& variable,
                                  const std::vector<RegionId>& members) {
  if (is_rate(variable))
    throw MisuseError("aggregate_regions: rates are never aggregated directly (" +
                      variable.name + "); aggregate levels and re-derive");
  AggregateResult result;
  result.series.set_frequency(Frequency::monthly);
  if (members.empty()) return result;

  // Canonical member order makes the floating-point sum independent of the
  // caller's ordering.
  std::vector<RegionId> ordered = members;
  std::sort(ordered.begin(), ordered.end());
  std::vector<const Series*> series;
  for (const RegionId& m : ordered) {
    const Series* s = panel.find(m, variable);
    if (!s) throw DomainError("aggregate_regions: missing series " + m.str() + "/" + variable.name);
    if (s->frequency() != Frequency::monthly)
      throw FrequencyError("aggregate_regions: member " + m.str() + " is not monthly");
    series.push_back(s);
  }

  // Union span for the gap report, intersection for the sum.
  MonthKey lo = series.front()->empty() ? MonthKey{0, 1} : series.front()->first_key();
  MonthKey hi = series.front()->empty() ? MonthKey{0, 1} : series.front()->last_key();
  for (const Series* s : series) {
    if (s->empty()) continue;
    lo = std::min(lo, s->first_key());
    hi = std::max(hi, s->last_key());
  }
  for (MonthKey k : month_range(lo, hi)) {
    double sum = 0;
    bool all = true;
    for (const Series* s : series) {
      auto v = s->get(k);
      if (!v) {
        all = false;
        break;
      }
      sum += *v;
    }
    if (all)
      result.series.set(k, sum);
    else
      result.gap_report.push_back(k);
  }
  return result;
}

const char* to_string(ConversionRule rule) { return rule == ConversionRule::sum ? "sum" : "average"; }

AnnualizeResult annualize(const Series& series, ConversionRule rule) {
  if (series.frequency() != Frequency::monthly)
    throw FrequencyError("annualize: input must be monthly");
  AnnualizeResult result;
  result.series.set_frequency(Frequency::annual);
  if (series.empty()) return result;

  for (int year = series.first_key().year; year <= series.last_key().year; ++year) {
    double sum = 0;
    int n = 0;
    for (int m = 1; m <= 12; ++m) {
      auto v = series.get({year, m});
      if (v) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) continue;
    if (n < 12) {
      result.partial_years.push_back(year);
      continue;
    }
    result.series.set(MonthKey::annual(year), rule == ConversionRule::sum ? sum : sum / 12.0);
  }
  return result;
}

}  // namespace labor
