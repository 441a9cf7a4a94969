#include "labor/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "labor/accounts.hpp"
#include "labor/errors.hpp"
#include "labor/rng.hpp"

namespace labor {

namespace {

std::string region_code(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", i + 1);
  return buf;
}

struct RegionTraits {
  double pop0 = 0;          // population at t = 0
  double pop_growth = 0;    // monthly growth rate
  double base_part = 0;     // participation level
  double base_unemp = 0;
  double base_inf = 0;
  double pet_share = 0;     // PET / population at t = 0
  double urban = 0;
  double wiggle_phase = 0;  // idiosyncratic slow wiggle
};

}  // namespace

SyntheticFixture generate_synthetic_panel(const SynthSpec& spec) {
  if (spec.n_regions < 3) throw DomainError("synthetic panel: need >= 3 regions");
  if (spec.n_years < 6) throw DomainError("synthetic panel: need >= 6 years");

  SyntheticFixture fx;
  const int y0 = spec.start_year;
  const int n_years = spec.n_years;
  fx.span = {{y0, 1}, {y0 + n_years - 1, 12}};
  fx.benchmark_start_year = y0 + 3;
  fx.dept_monthly_start_year = y0 + 4;
  fx.city_monthly_start_year = y0 + n_years - 3;
  fx.informality_start_year = y0 + 4;

  Rng rng(spec.seed);

  // Region traits: three structural clusters, mild offsets inside each.
  const char* cluster_names[3] = {"large_urban", "mid_urban", "peripheral"};
  const double cluster_part[3] = {0.66, 0.63, 0.59};
  const double cluster_unemp[3] = {0.10, 0.12, 0.14};
  const double cluster_inf[3] = {0.54, 0.62, 0.70};
  std::vector<RegionTraits> traits(spec.n_regions);
  for (int i = 0; i < spec.n_regions; ++i) {
    int c = i % 3;
    RegionTraits& t = traits[i];
    t.pop0 = 8e5 + 6e5 * (i % 4) + 2e5 * rng.uniform();
    t.pop_growth = (0.010 + 0.008 * rng.uniform()) / 12.0;
    t.base_part = cluster_part[c] + 0.015 * (rng.uniform() - 0.5);
    t.base_unemp = cluster_unemp[c] + 0.010 * (rng.uniform() - 0.5);
    t.base_inf = cluster_inf[c] + 0.02 * (rng.uniform() - 0.5);
    t.pet_share = 0.76 + 0.02 * (rng.uniform() - 0.5);
    t.urban = 0.55 + 0.25 * rng.uniform();
    t.wiggle_phase = 2 * M_PI * rng.uniform();
    fx.departments.push_back(region_code(i));
    fx.clusters[cluster_names[c]].push_back(region_code(i));
    bool unobserved = spec.n_regions >= 6 && (i == 3 || i == 5);
    if (!unobserved) fx.observed_departments.push_back(region_code(i));
  }

  const double cycle_phase = 2 * M_PI * rng.uniform();
  const double season_phase = 2 * M_PI * rng.uniform();

  // One leading year feeds the annual interpolation anchors.
  const int t_lead = 12;
  const int t_total = t_lead + 12 * n_years;

  auto cycle = [&](int t) {
    return 0.6 * std::sin(2 * M_PI * t / 48.0 + cycle_phase) +
           0.4 * std::sin(2 * M_PI * t / 90.0 + 1.7 * cycle_phase);
  };
  auto season = [&](int t) { return std::sin(2 * M_PI * (t % 12) / 12.0 + season_phase); };

  // Latent monthly truth, regions x months (month index 0 = January of the
  // lead year).
  std::vector<std::vector<double>> pop(spec.n_regions), pet(spec.n_regions),
      pea(spec.n_regions), emp(spec.n_regions), unemp_l(spec.n_regions),
      inact(spec.n_regions), inf_rate(spec.n_regions);
  for (int i = 0; i < spec.n_regions; ++i) {
    const RegionTraits& t = traits[i];
    for (int m = 0; m < t_total; ++m) {
      double c = cycle(m);
      double s = season(m);
      double wig = std::sin(2 * M_PI * m / 70.0 + t.wiggle_phase);

      double population = t.pop0 * std::pow(1.0 + t.pop_growth, m);
      double pet_ratio = t.pet_share + 0.015 * (m / static_cast<double>(t_total));
      double part = t.base_part + 0.030 * c + 0.006 * s + 0.004 * wig;
      double u = t.base_unemp - 0.035 * c + 0.006 * season(m + 4) + 0.003 * wig;
      double informality = t.base_inf - 0.025 * c - 0.015 * (m / static_cast<double>(t_total)) +
                           0.004 * std::sin(2 * M_PI * m / 55.0 + 2 * t.wiggle_phase);
      part = std::clamp(part, 0.50, 0.75);
      u = std::clamp(u, 0.05, 0.22);
      informality = std::clamp(informality, 0.45, 0.75);

      double pet_v = pet_ratio * population;
      double pea_v = part * pet_v;
      double unemp_v = u * pea_v;
      pop[i].push_back(population);
      pet[i].push_back(pet_v);
      pea[i].push_back(pea_v);
      emp[i].push_back(pea_v - unemp_v);
      unemp_l[i].push_back(unemp_v);
      inact[i].push_back(pet_v - pea_v);
      inf_rate[i].push_back(informality);
    }
  }

  // Macro covariates driven by the same latent cycle. Emitted from the lead
  // year so 12-month transforms cover the whole product span.
  Series cpi(Frequency::monthly), trm(Frequency::monthly), ppi(Frequency::monthly),
      ipi(Frequency::monthly), wage(Frequency::monthly), subsidy(Frequency::monthly);
  double wage_level = 500.0, subsidy_level = 60.0;
  for (int m = 0; m < t_total; ++m) {
    MonthKey k = MonthKey::from_index(MonthKey{y0 - 1, 1}.index() + m);
    double c = cycle(m);
    double s = season(m);
    cpi.set(k, 100.0 * std::pow(1.0035, m) * (1 + 0.015 * c) * (1 + 0.0008 * rng.normal()));
    trm.set(k, 2000.0 * (1 - 0.08 * cycle(m - 3)) * (1 + 0.002 * rng.normal()));
    ppi.set(k, 100.0 * std::pow(1.0030, m) * (1 + 0.02 * c + 0.004 * s) *
                   (1 + 0.001 * rng.normal()));
    ipi.set(k, 100.0 * (1 + 0.05 * c + 0.02 * s) * (1 + 0.002 * rng.normal()));
    if (k.month == 1) {
      wage_level *= 1.045;
      subsidy_level *= 1.045;
    }
    wage.set(k, wage_level);
    subsidy.set(k, subsidy_level);
  }
  const RegionId nat = RegionId::national();
  fx.observed.insert(nat, VariableId{"cpi"}, cpi);
  fx.observed.insert(nat, VariableId{"trm"}, trm);
  fx.observed.insert(nat, VariableId{"ppi"}, ppi);
  fx.observed.insert(nat, VariableId{"ipi"}, ipi);
  fx.observed.insert(nat, VariableId{"min_wage"}, wage);
  fx.observed.insert(nat, VariableId{"transport_subsidy"}, subsidy);

  auto monthly_series = [&](const std::vector<double>& v, int from_month, int to_month) {
    Series s(Frequency::monthly);
    for (int m = from_month; m <= to_month; ++m)
      s.set(MonthKey::from_index(MonthKey{y0 - 1, 1}.index() + m), v[m]);
    return s;
  };
  auto annual_means = [&](const std::vector<double>& v, int year_from, int year_to,
                          double bias = 1.0) {
    Series s(Frequency::annual);
    for (int y = year_from; y <= year_to; ++y) {
      int base = (y - (y0 - 1)) * 12;
      double sum = 0;
      for (int m = 0; m < 12; ++m) sum += v[base + m];
      s.set(MonthKey::annual(y), bias * sum / 12.0);
    }
    return s;
  };

  // National truth = sum over regions.
  std::vector<double> nat_pop(t_total, 0), nat_pet(t_total, 0), nat_pea(t_total, 0),
      nat_emp(t_total, 0), nat_unemp(t_total, 0), nat_inact(t_total, 0),
      nat_inf_count(t_total, 0);
  for (int i = 0; i < spec.n_regions; ++i)
    for (int m = 0; m < t_total; ++m) {
      nat_pop[m] += pop[i][m];
      nat_pet[m] += pet[i][m];
      nat_pea[m] += pea[i][m];
      nat_emp[m] += emp[i][m];
      nat_unemp[m] += unemp_l[i][m];
      nat_inact[m] += inact[i][m];
      nat_inf_count[m] += inf_rate[i][m] * emp[i][m];
    }
  std::vector<double> nat_inf(t_total);
  for (int m = 0; m < t_total; ++m) nat_inf[m] = nat_inf_count[m] / nat_emp[m];

  // National annual aggregates over the full span (WB-style input), with a
  // +1% level bias on the labor-force series to mimic source inconsistency.
  const int y_end = y0 + n_years - 1;
  fx.observed.insert(nat, var::population, annual_means(nat_pop, y0 - 1, y_end));
  fx.observed.insert(nat, var::pet, annual_means(nat_pet, y0 - 1, y_end));
  fx.observed.insert(nat, var::pea, annual_means(nat_pea, y0 - 1, y_end, 1.01));
  fx.observed.insert(nat, var::employed, annual_means(nat_emp, y0 - 1, y_end));
  fx.observed.insert(nat, var::unemployed, annual_means(nat_unemp, y0 - 1, y_end));
  fx.observed.insert(nat, var::inactive, annual_means(nat_inact, y0 - 1, y_end));

  // National monthly benchmark window (survey era). Monthly observations of
  // an annually-benchmarked variable carry a "_monthly" suffix so both
  // frequencies coexist under one (region, variable) keying.
  const int bench_from = (fx.benchmark_start_year - (y0 - 1)) * 12;
  auto insert_national_monthly = [&](const VariableId& v, const std::vector<double>& data) {
    fx.observed.insert(nat, VariableId{v.name + "_monthly"},
                       monthly_series(data, bench_from, t_total - 1));
  };
  insert_national_monthly(var::population, nat_pop);
  insert_national_monthly(var::pet, nat_pet);
  insert_national_monthly(var::pea, nat_pea);
  insert_national_monthly(var::employed, nat_emp);
  insert_national_monthly(var::unemployed, nat_unemp);
  insert_national_monthly(var::inactive, nat_inact);
  fx.observed.insert(nat, var::informality_rate,
                     monthly_series(nat_inf, (fx.informality_start_year - (y0 - 1)) * 12,
                                    t_total - 1));

  // Departmental data.
  const int dept_bench_y0 = fx.benchmark_start_year;
  const int dept_monthly_from = (fx.dept_monthly_start_year - (y0 - 1)) * 12;
  const int city_from = (fx.city_monthly_start_year - (y0 - 1)) * 12;
  const int inf_from = (fx.informality_start_year - (y0 - 1)) * 12;
  const int span_from = t_lead;

  for (int i = 0; i < spec.n_regions; ++i) {
    const std::string code = region_code(i);
    const RegionId dept = RegionId::department(code);
    const RegionId city = RegionId::city(code);
    bool observed_dept =
        std::find(fx.observed_departments.begin(), fx.observed_departments.end(), code) !=
        fx.observed_departments.end();

    // Annual benchmarks (survey era) for every department.
    fx.observed.insert(dept, var::employed, annual_means(emp[i], dept_bench_y0, y_end));
    fx.observed.insert(dept, var::unemployed, annual_means(unemp_l[i], dept_bench_y0, y_end));
    fx.observed.insert(dept, var::pea, annual_means(pea[i], dept_bench_y0, y_end));
    fx.observed.insert(dept, var::pet, annual_means(pet[i], dept_bench_y0, y_end));
    fx.observed.insert(dept, var::inactive, annual_means(inact[i], dept_bench_y0, y_end));

    // Demographic projections and the urban-share covariate, full span.
    fx.observed.insert(dept, var::population, monthly_series(pop[i], span_from, t_total - 1));
    Series urban(Frequency::monthly);
    for (int m = span_from; m < t_total; ++m)
      urban.set(MonthKey::from_index(MonthKey{y0 - 1, 1}.index() + m),
                traits[i].urban + 0.01 * (m / static_cast<double>(t_total)));
    fx.observed.insert(dept, VariableId{"urban_share"}, urban);

    // Monthly survey window for observed departments.
    if (observed_dept) {
      fx.observed.insert(dept, VariableId{"employed_monthly"},
                         monthly_series(emp[i], dept_monthly_from, t_total - 1));
      fx.observed.insert(dept, VariableId{"unemployed_monthly"},
                         monthly_series(unemp_l[i], dept_monthly_from, t_total - 1));
      fx.observed.insert(dept, VariableId{"pea_monthly"},
                         monthly_series(pea[i], dept_monthly_from, t_total - 1));
      fx.observed.insert(dept, VariableId{"pet_monthly"},
                         monthly_series(pet[i], dept_monthly_from, t_total - 1));
      fx.observed.insert(dept, VariableId{"inactive_monthly"},
                         monthly_series(inact[i], dept_monthly_from, t_total - 1));
    }

    // City series: urban slice of the department with a small level offset.
    double urban_scale = traits[i].urban;
    auto city_series = [&](const std::vector<double>& v, int from) {
      Series s(Frequency::monthly);
      for (int m = from; m < t_total; ++m)
        s.set(MonthKey::from_index(MonthKey{y0 - 1, 1}.index() + m), v[m] * urban_scale);
      return s;
    };
    fx.observed.insert(city, var::employed, city_series(emp[i], city_from));
    fx.observed.insert(city, var::unemployed, city_series(unemp_l[i], city_from));
    fx.observed.insert(city, var::pea, city_series(pea[i], city_from));
    fx.observed.insert(city, var::pet, city_series(pet[i], city_from));
    fx.observed.insert(city, var::inactive, city_series(inact[i], city_from));
    fx.observed.insert(city, var::population, city_series(pop[i], city_from));

    // City informality (longer window, like the survey's city annexes).
    Series city_inf(Frequency::monthly);
    for (int m = inf_from; m < t_total; ++m)
      city_inf.set(MonthKey::from_index(MonthKey{y0 - 1, 1}.index() + m),
                   std::clamp(inf_rate[i][m] + 0.01 * (traits[i].urban - 0.65), 0.01, 0.99));
    fx.observed.insert(city, var::informality_rate, city_inf);

    // Hidden truth, product span only.
    fx.truth.insert(dept, var::employed, monthly_series(emp[i], span_from, t_total - 1));
    fx.truth.insert(dept, var::unemployed, monthly_series(unemp_l[i], span_from, t_total - 1));
    fx.truth.insert(dept, var::pea, monthly_series(pea[i], span_from, t_total - 1));
    fx.truth.insert(dept, var::pet, monthly_series(pet[i], span_from, t_total - 1));
    fx.truth.insert(dept, var::inactive, monthly_series(inact[i], span_from, t_total - 1));
    fx.truth.insert(dept, var::population, monthly_series(pop[i], span_from, t_total - 1));
    fx.truth.insert(dept, var::informality_rate,
                    monthly_series(inf_rate[i], span_from, t_total - 1));
  }

  return fx;
}

}  // namespace labor
