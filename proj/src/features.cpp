#include "labor/features.hpp"

#include <algorithm>

#include "labor/errors.hpp"

namespace labor {

Series deflated_wage_index(const Series& wage, const Series& subsidy, const Series& cpi,
                           int base_year) {
  Series raw(Frequency::monthly);
  for (const auto& [k, w] : wage.points()) {
    auto s = subsidy.get(k);
    auto c = cpi.get(k);
    if (!s || !c) continue;
    if (*c <= 0) throw DomainError("deflated_wage_index: nonpositive cpi at " + k.str());
    raw.set(k, (w + *s) / *c);
  }
  if (raw.empty()) throw CoverageError("deflated_wage_index: no overlapping months");

  double base_sum = 0;
  int base_n = 0;
  for (int m = 1; m <= 12; ++m) {
    auto v = raw.get({base_year, m});
    if (v) {
      base_sum += *v;
      ++base_n;
    }
  }
  if (base_n == 0)
    throw DomainError("deflated_wage_index: base year " + std::to_string(base_year) +
                      " not covered");
  double base = base_sum / base_n;

  Series out(Frequency::monthly);
  for (const auto& [k, v] : raw.points()) out.set(k, 100.0 * v / base);
  return out;
}

est::FeatureMatrix build_features(
    const Panel& observed,
    const std::map<std::string, std::map<std::string, Series>>& city_rates,
    const std::map<std::string, std::vector<std::string>>& clusters,
    const std::vector<std::string>& departments,
    const std::vector<std::string>& observed_departments, MonthSpan span,
    const FeatureConfig& config) {
  // Leakage guard on the configuration itself.
  auto forbid_divisor = [&](const std::vector<std::string>& names, const char* where) {
    for (const std::string& n : names)
      if (n == config.divisor)
        throw LeakageError(std::string("build_features: divisor '") + config.divisor +
                           "' requested as a " + where + " feature");
  };
  forbid_divisor(config.macro, "macro");
  forbid_divisor(config.dept_covariates, "department");
  forbid_divisor(config.cluster_signal_vars, "cluster-signal");

  // Every cluster must contain at least one observed department.
  std::map<std::string, std::string> cluster_of;
  for (const auto& [name, members] : clusters) {
    bool covered = false;
    for (const std::string& code : members) {
      cluster_of[code] = name;
      if (std::find(observed_departments.begin(), observed_departments.end(), code) !=
          observed_departments.end())
        covered = true;
    }
    if (!covered)
      throw CoverageError("build_features: cluster '" + name +
                          "' has no observed department");
  }
  for (const std::string& code : departments)
    if (!cluster_of.count(code))
      throw CoverageError("build_features: department " + code + " has no cluster");

  const RegionId national = RegionId::national();
  auto national_series = [&](const std::string& name) -> const Series& {
    const Series* s = observed.find(national, VariableId{name});
    if (!s) throw CoverageError("build_features: missing national covariate '" + name + "'");
    return *s;
  };

  Series wage_index =
      deflated_wage_index(national_series(config.wage), national_series(config.subsidy),
                          national_series(config.cpi),
                          config.wage_base_year ? config.wage_base_year : span.first.year);

  std::vector<MonthKey> grid = month_range(span.first, span.last);

  auto macro_value = [&](const std::string& name, MonthKey k) -> double {
    const Series& s = national_series(name);
    auto it = config.macro_transforms.find(name);
    if (it == config.macro_transforms.end() || it->second == "level") {
      auto v = s.get(k);
      if (!v) throw CoverageError("build_features: covariate '" + name + "' missing at " + k.str());
      return *v;
    }
    if (it->second == "yoy") {
      auto now = s.get(k);
      auto ago = s.get(MonthKey::from_index(k.index() - 12));
      if (!now || !ago)
        throw CoverageError("build_features: yoy transform of '" + name +
                            "' lacks coverage at " + k.str());
      if (*ago == 0)
        throw DomainError("build_features: yoy transform of '" + name + "' divides by zero");
      return *now / *ago - 1.0;
    }
    throw SchemaError("build_features: unknown transform '" + it->second + "' for " + name);
  };
  auto macro_column_name = [&](const std::string& name) {
    auto it = config.macro_transforms.find(name);
    if (it != config.macro_transforms.end() && it->second == "yoy") return name + "_yoy";
    return name;
  };

  est::FeatureMatrix out;
  for (const std::string& m : config.macro) out.column_names.push_back(macro_column_name(m));
  out.column_names.push_back("deflated_wage");
  for (const std::string& c : config.dept_covariates) out.column_names.push_back(c);
  if (config.include_own_city)
    for (const std::string& v : config.cluster_signal_vars)
      out.column_names.push_back("city_" + v);
  for (const std::string& v : config.cluster_signal_vars)
    out.column_names.push_back("cluster_" + v);

  const Eigen::Index n_rows =
      static_cast<Eigen::Index>(departments.size()) * static_cast<Eigen::Index>(grid.size());
  out.values.resize(n_rows, static_cast<Eigen::Index>(out.column_names.size()));

  // Cluster means of the city signals, per variable and month.
  auto cluster_mean = [&](const std::string& var, const std::string& cluster,
                          MonthKey k) -> double {
    auto vit = city_rates.find(var);
    if (vit == city_rates.end())
      throw CoverageError("build_features: no city signal for '" + var + "'");
    double sum = 0;
    int n = 0;
    for (const std::string& code : clusters.at(cluster)) {
      auto sit = vit->second.find(code);
      if (sit == vit->second.end()) continue;
      auto v = sit->second.get(k);
      if (v) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0)
      throw CoverageError("build_features: cluster '" + cluster + "' has no observed member "
                          "for signal '" + var + "' at " + k.str());
    return sum / n;
  };

  Eigen::Index row = 0;
  for (const std::string& code : departments) {
    for (MonthKey k : grid) {
      Eigen::Index col = 0;
      for (const std::string& m : config.macro) out.values(row, col++) = macro_value(m, k);
      {
        auto v = wage_index.get(k);
        if (!v) throw CoverageError("build_features: deflated wage missing at " + k.str());
        out.values(row, col++) = *v;
      }
      for (const std::string& c : config.dept_covariates) {
        const Series* s = observed.find(RegionId::department(code), VariableId{c});
        if (!s)
          throw CoverageError("build_features: department covariate '" + c + "' missing for " +
                              code);
        auto v = s->get(k);
        if (!v)
          throw CoverageError("build_features: covariate '" + c + "' missing for " + code +
                              " at " + k.str());
        out.values(row, col++) = *v;
      }
      if (config.include_own_city) {
        for (const std::string& v : config.cluster_signal_vars) {
          auto vit = city_rates.find(v);
          if (vit == city_rates.end() || !vit->second.count(code))
            throw CoverageError("build_features: no own-city signal '" + v + "' for " + code);
          auto val = vit->second.at(code).get(k);
          if (!val)
            throw CoverageError("build_features: own-city signal '" + v + "' missing for " +
                                code + " at " + k.str());
          out.values(row, col++) = *val;
        }
      }
      for (const std::string& v : config.cluster_signal_vars)
        out.values(row, col++) = cluster_mean(v, cluster_of.at(code), k);

      out.groups.push_back(code);
      out.times.push_back(k);
      ++row;
    }
  }

  // Final leakage scan over the assembled column set.
  for (const std::string& name : out.column_names)
    if (name == config.divisor)
      throw LeakageError("build_features: divisor column leaked into the feature matrix");
  out.validate();
  return out;
}

}  // namespace labor
