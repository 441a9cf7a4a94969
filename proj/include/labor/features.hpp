#pragma once

#include <map>
#include <string>
#include <vector>

#include "labor/estimator.hpp"
#include "labor/panel.hpp"

namespace labor {

struct FeatureConfig {
  std::vector<std::string> macro;  // national covariate columns
  // Per-macro transform: "level" (default) or "yoy" (12-month relative
  // change). Trending indices enter as yoy so backcast-era inputs stay in
  // the training distribution.
  std::map<std::string, std::string> macro_transforms;
  // Deflated statutory wage composite: (wage + subsidy) / cpi, indexed to
  // 100 at the base year.
  std::string wage = "min_wage";
  std::string subsidy = "transport_subsidy";
  std::string cpi = "cpi";
  int wage_base_year = 0;  // 0 = first year of the span
  std::vector<std::string> dept_covariates;      // per-department panel series
  std::vector<std::string> cluster_signal_vars;  // labor-rate signals to average per cluster
  bool include_own_city = true;
  std::string divisor = "population";  // never allowed as a feature
};

// Assembles the department-month design matrix: national macro covariates,
// the deflated-wage composite, department covariates, the department's own
// city signal rates, and cluster means of those signals. The population
// divisor is excluded by contract.
est::FeatureMatrix build_features(
    const Panel& observed,
    const std::map<std::string, std::map<std::string, Series>>& city_rates,
    const std::map<std::string, std::vector<std::string>>& clusters,
    const std::vector<std::string>& departments,
    const std::vector<std::string>& observed_departments, MonthSpan span,
    const FeatureConfig& config);

// (wage + subsidy) / cpi scaled so the base-year mean is 100.
Series deflated_wage_index(const Series& wage, const Series& subsidy, const Series& cpi,
                           int base_year);

}  // namespace labor
