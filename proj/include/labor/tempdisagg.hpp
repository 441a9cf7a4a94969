#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "labor/accounts.hpp"
#include "labor/series.hpp"

namespace labor {

// Default estimation grid for the AR(1) parameter: -0.99..0.99, step 0.01.
std::vector<double> default_rho_grid();

struct DisaggProblem {
  Series annual_target;            // annual, consecutive years
  std::vector<Series> indicators;  // monthly, each covering 12 x n_years
  ConversionRule rule = ConversionRule::average;
  std::vector<double> rho_grid = default_rho_grid();

  int n_years() const { return static_cast<int>(annual_target.size()); }
  // First month of the first target year.
  MonthKey first_month() const;
  std::vector<MonthKey> monthly_grid() const;
  void validate() const;
};

struct ChowLinFit {
  Eigen::VectorXd beta;  // intercept first
  double rho = 0;
  double sigma2 = 0;
  double loglik = 0;
  Series distribution;  // monthly
  double condition_number = 0;  // of the aggregated GLS normal matrix
};

// n_years x 12*n_years block-diagonal aggregator; rows of ones (sum) or
// ones/12 (average).
Eigen::MatrixXd conversion_matrix(int n_years, ConversionRule rule);

// GLS disaggregation with AR(1) errors. For each rho on the grid the monthly
// covariance has entries rho^|i-j| / (1 - rho^2); beta is the GLS estimate
// on the aggregated model, sigma^2 is profiled out of the Gaussian
// likelihood, and the grid maximizer is returned. The distribution allocates
// annual residuals through the covariance, so re-aggregation is exact.
ChowLinFit chowlin_fit(const DisaggProblem& problem);

struct DistributionCertificate {
  double max_relative_deviation = 0;
};

// Returns the fitted distribution after re-checking aggregation consistency;
// deviations above 1e-6 relative raise a certification error.
Series distribute(const ChowLinFit& fit, const DisaggProblem& problem,
                  DistributionCertificate* certificate = nullptr);

// Proportional first-difference Denton fallback: minimizes the squared
// first differences of y_t / x_t subject to the aggregation constraints,
// solved as a sparse KKT system.
Series denton_pfd(const Series& annual_target, const Series& indicator, ConversionRule rule);

struct IndicatorScore {
  std::string name;
  double relative_rmse = 0;
};

struct IndicatorSelection {
  std::string best;
  std::vector<IndicatorScore> table;  // in name order
};

// Runs chowlin_fit per candidate and scores RMSE(distribution, benchmark)
// divided by the benchmark mean over the overlap (>= 12 months required).
// Ties break by candidate name order.
IndicatorSelection select_indicator(const Series& annual_target, ConversionRule rule,
                                    const std::map<std::string, Series>& candidates,
                                    const Series& benchmark,
                                    const std::vector<double>& rho_grid = default_rho_grid());

void write_rmse_table_csv(const IndicatorSelection& selection, const std::string& ratio_name,
                          std::ostream& out);

}  // namespace labor
