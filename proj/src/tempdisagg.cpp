#include "labor/tempdisagg.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "labor/csv.hpp"
#include "labor/errors.hpp"

namespace labor {

std::vector<double> default_rho_grid() {
  std::vector<double> grid;
  grid.reserve(199);
  for (int i = -99; i <= 99; ++i) grid.push_back(i / 100.0);
  return grid;
}

MonthKey DisaggProblem::first_month() const {
  return MonthKey{annual_target.first_key().year, 1};
}

std::vector<MonthKey> DisaggProblem::monthly_grid() const {
  int y0 = annual_target.first_key().year;
  int y1 = annual_target.last_key().year;
  return month_range({y0, 1}, {y1, 12});
}

void DisaggProblem::validate() const {
  if (annual_target.frequency() != Frequency::annual)
    throw FrequencyError("disagg: target must be annual");
  if (annual_target.empty()) throw DomainError("disagg: empty annual target");
  if (!annual_target.gaps().empty())
    throw DomainError("disagg: annual target has gaps");
  for (double r : rho_grid)
    if (!(std::abs(r) <= 0.99)) throw DomainError("disagg: rho grid outside [-0.99, 0.99]");
  if (rho_grid.empty()) throw DomainError("disagg: empty rho grid");
  MonthKey lo{annual_target.first_key().year, 1};
  MonthKey hi{annual_target.last_key().year, 12};
  for (const Series& ind : indicators) {
    if (ind.frequency() != Frequency::monthly)
      throw FrequencyError("disagg: indicators must be monthly");
    if (!ind.covers(lo, hi))
      throw DomainError("disagg: indicator does not cover all target months");
  }
}

Eigen::MatrixXd conversion_matrix(int n_years, ConversionRule rule) {
  if (n_years < 1) throw DomainError("conversion_matrix: n_years must be >= 1");
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n_years, 12 * n_years);
  double w = rule == ConversionRule::sum ? 1.0 : 1.0 / 12.0;
  for (int t = 0; t < n_years; ++t)
    for (int m = 0; m < 12; ++m) c(t, 12 * t + m) = w;
  return c;
}

namespace {

// Design matrix with leading intercept column.
Eigen::MatrixXd build_design(const DisaggProblem& problem) {
  const auto grid = problem.monthly_grid();
  const int n = static_cast<int>(grid.size());
  const int k = static_cast<int>(problem.indicators.size());
  Eigen::MatrixXd x(n, k + 1);
  x.col(0).setOnes();
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < n; ++i) x(i, j + 1) = problem.indicators[j].at(grid[i]);
  return x;
}

Eigen::MatrixXd ar1_covariance(int n, double rho) {
  // Stationary AR(1): rho^|i-j| / (1 - rho^2). The normalization cancels in
  // the distribution formula but keeps the likelihood well-scaled.
  Eigen::MatrixXd sigma(n, n);
  double scale = 1.0 / (1.0 - rho * rho);
  std::vector<double> pow_cache(n);
  for (int d = 0; d < n; ++d) pow_cache[d] = std::pow(rho, d) * scale;
  if (rho == 0.0) {
    sigma.setZero();
    sigma.diagonal().setConstant(scale);
    return sigma;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) sigma(i, j) = pow_cache[std::abs(i - j)];
  return sigma;
}

double matrix_rank(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  double smax = svd.singularValues().maxCoeff();
  if (smax == 0.0) return 0;
  return (svd.singularValues().array() > smax * 1e-10).count();
}

struct RhoEval {
  double loglik = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta;
  double sigma2 = 0;
  Eigen::VectorXd distribution;
  double condition = 0;
  bool ok = false;
};

RhoEval evaluate_rho(const Eigen::MatrixXd& x, const Eigen::VectorXd& y_annual,
                     const Eigen::MatrixXd& c, double rho) {
  RhoEval ev;
  const int n_low = static_cast<int>(y_annual.size());
  Eigen::MatrixXd sigma = ar1_covariance(static_cast<int>(x.rows()), rho);
  Eigen::MatrixXd sigma_low = c * sigma * c.transpose();

  Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma_low);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return ev;

  Eigen::MatrixXd xl = c * x;  // aggregated design
  Eigen::MatrixXd sinv_xl = ldlt.solve(xl);
  Eigen::VectorXd sinv_y = ldlt.solve(y_annual);
  Eigen::MatrixXd normal = xl.transpose() * sinv_xl;

  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(normal);
    double smin = svd.singularValues().minCoeff();
    double smax = svd.singularValues().maxCoeff();
    if (smin <= 0 || smax <= 0) return ev;
    ev.condition = smax / smin;
  }

  Eigen::VectorXd beta = normal.ldlt().solve(xl.transpose() * sinv_y);
  Eigen::VectorXd u = y_annual - xl * beta;
  double quad = u.dot(ldlt.solve(u));
  if (quad < 0) quad = 0;
  double sigma2 = quad / n_low;

  // Profiled Gaussian log-likelihood; log|Sigma_L| from the LDLT pivots.
  double logdet = 0;
  for (int i = 0; i < n_low; ++i) logdet += std::log(ldlt.vectorD()(i));
  double loglik;
  if (sigma2 <= 0) {
    // Exact fit: the profiled likelihood is unbounded above; rank such fits
    // first, deterministically, via logdet.
    loglik = 1e300 - logdet;
  } else {
    loglik = -0.5 * n_low * (std::log(2 * M_PI * sigma2) + 1) - 0.5 * logdet;
  }
  if (!std::isfinite(loglik)) return ev;

  ev.beta = beta;
  ev.sigma2 = sigma2;
  ev.loglik = loglik;
  ev.distribution = x * beta + sigma * c.transpose() * ldlt.solve(u);
  ev.ok = true;
  return ev;
}

}  // namespace

ChowLinFit chowlin_fit(const DisaggProblem& problem) {
  problem.validate();
  if (problem.n_years() < 3)
    throw DomainError("chowlin_fit: need >= 3 annual observations");

  Eigen::MatrixXd x_full = build_design(problem);
  Eigen::VectorXd y(problem.n_years());
  {
    int i = 0;
    for (const auto& [k, v] : problem.annual_target.points()) y(i++) = v;
  }
  Eigen::MatrixXd c = conversion_matrix(problem.n_years(), problem.rule);

  // The rank contract is on the indicators: collinear indicators after
  // aggregation are an error. The intercept is dropped instead when it is
  // the column that breaks full rank (e.g. a constant indicator).
  const int k = static_cast<int>(problem.indicators.size());
  Eigen::MatrixXd xl_full = c * x_full;
  if (k > 0 && static_cast<int>(matrix_rank(xl_full.rightCols(k))) < k)
    throw RankError("chowlin_fit: indicators are rank deficient after aggregation");
  bool drop_intercept = false;
  if (static_cast<int>(matrix_rank(xl_full)) < k + 1) {
    if (k >= 1 && k <= problem.n_years())
      drop_intercept = true;
    else
      throw RankError("chowlin_fit: aggregated design is rank deficient");
  }
  Eigen::MatrixXd x = drop_intercept ? x_full.rightCols(k).eval() : x_full;

  RhoEval best;
  double best_rho = 0;
  for (double rho : problem.rho_grid) {
    RhoEval ev = evaluate_rho(x, y, c, rho);
    if (!ev.ok) continue;
    if (ev.loglik > best.loglik || !best.ok) {
      best = ev;
      best_rho = rho;
    }
  }
  if (!best.ok)
    throw NumericalError("chowlin_fit: likelihood non-finite on the whole rho grid");

  ChowLinFit fit;
  if (drop_intercept) {
    fit.beta = Eigen::VectorXd::Zero(k + 1);
    fit.beta.tail(k) = best.beta;
  } else {
    fit.beta = best.beta;
  }
  fit.rho = best_rho;
  fit.sigma2 = best.sigma2;
  fit.loglik = best.loglik;
  fit.condition_number = best.condition;
  fit.distribution.set_frequency(Frequency::monthly);
  const auto grid = problem.monthly_grid();
  for (std::size_t i = 0; i < grid.size(); ++i)
    fit.distribution.set(grid[i], best.distribution(static_cast<Eigen::Index>(i)));
  return fit;
}

Series distribute(const ChowLinFit& fit, const DisaggProblem& problem,
                  DistributionCertificate* certificate) {
  AnnualizeResult agg = annualize(fit.distribution, problem.rule);
  double max_dev = 0;
  for (const auto& [k, target] : problem.annual_target.points()) {
    auto got = agg.series.get(k);
    if (!got) throw CertificationError("distribute: year " + std::to_string(k.year) +
                                       " missing from re-aggregation");
    double denom = std::max(std::abs(target), 1e-12);
    max_dev = std::max(max_dev, std::abs(*got - target) / denom);
  }
  if (certificate) certificate->max_relative_deviation = max_dev;
  if (max_dev > 1e-6)
    throw CertificationError("distribute: re-aggregation deviates by " +
                             format_double(max_dev));
  return fit.distribution;
}

Series denton_pfd(const Series& annual_target, const Series& indicator, ConversionRule rule) {
  if (annual_target.frequency() != Frequency::annual)
    throw FrequencyError("denton_pfd: target must be annual");
  if (!annual_target.gaps().empty()) throw DomainError("denton_pfd: target has gaps");
  const int ny = static_cast<int>(annual_target.size());
  if (ny < 1) throw DomainError("denton_pfd: empty target");
  const int n = 12 * ny;
  MonthKey lo{annual_target.first_key().year, 1};
  MonthKey hi{annual_target.last_key().year, 12};
  if (!indicator.covers(lo, hi))
    throw DomainError("denton_pfd: indicator does not cover all target months");

  std::vector<MonthKey> grid = month_range(lo, hi);
  Eigen::VectorXd xv(n);
  for (int i = 0; i < n; ++i) {
    double v = indicator.at(grid[i]);
    if (v <= 0) throw DomainError("denton_pfd: indicator must be strictly positive");
    xv(i) = v;
  }

  // Minimize || D (y ./ x) ||^2 s.t. C y = a. In the ratio variable r the
  // KKT system is [2 D'D, (C X)'; C X, 0] [r; mu] = [0; a], X = diag(x).
  using Trip = Eigen::Triplet<double>;
  std::vector<Trip> trips;
  const int dim = n + ny;
  // 2 D'D: tridiagonal with 2,4,...,4,2 diagonal and -2 off-diagonals.
  for (int i = 0; i < n; ++i) {
    double diag = 0;
    if (i > 0) diag += 2;
    if (i + 1 < n) diag += 2;
    if (diag != 0) trips.emplace_back(i, i, diag);
    if (i + 1 < n) {
      trips.emplace_back(i, i + 1, -2.0);
      trips.emplace_back(i + 1, i, -2.0);
    }
  }
  double w = rule == ConversionRule::sum ? 1.0 : 1.0 / 12.0;
  for (int t = 0; t < ny; ++t)
    for (int m = 0; m < 12; ++m) {
      int col = 12 * t + m;
      double cx = w * xv(col);
      trips.emplace_back(n + t, col, cx);
      trips.emplace_back(col, n + t, cx);
    }
  Eigen::SparseMatrix<double> kkt(dim, dim);
  kkt.setFromTriplets(trips.begin(), trips.end());

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  {
    int t = 0;
    for (const auto& [k, v] : annual_target.points()) rhs(n + t++) = v;
  }

  Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
  solver.compute(kkt);
  if (solver.info() != Eigen::Success)
    throw NumericalError("denton_pfd: singular KKT system");
  Eigen::VectorXd sol = solver.solve(rhs);
  if (solver.info() != Eigen::Success)
    throw NumericalError("denton_pfd: KKT solve failed");

  Series out(Frequency::monthly);
  for (int i = 0; i < n; ++i) out.set(grid[i], sol(i) * xv(i));

  // Exact-aggregation guard, same bound as Chow-Lin.
  AnnualizeResult agg = annualize(out, rule);
  for (const auto& [k, target] : annual_target.points()) {
    double denom = std::max(std::abs(target), 1e-12);
    if (std::abs(agg.series.at(k) - target) / denom > 1e-8)
      throw CertificationError("denton_pfd: aggregation drift at year " +
                               std::to_string(k.year));
  }
  return out;
}

IndicatorSelection select_indicator(const Series& annual_target, ConversionRule rule,
                                    const std::map<std::string, Series>& candidates,
                                    const Series& benchmark,
                                    const std::vector<double>& rho_grid) {
  if (candidates.empty()) throw DomainError("select_indicator: no candidates");
  IndicatorSelection result;
  double best_rmse = std::numeric_limits<double>::infinity();

  for (const auto& [name, indicator] : candidates) {
    DisaggProblem problem;
    problem.annual_target = annual_target;
    problem.indicators = {indicator};
    problem.rule = rule;
    problem.rho_grid = rho_grid;
    ChowLinFit fit = chowlin_fit(problem);
    Series dist = distribute(fit, problem);

    double se = 0, mean = 0;
    int count = 0;
    for (const auto& [k, bench] : benchmark.points()) {
      auto got = dist.get(k);
      if (!got) continue;
      double e = *got - bench;
      se += e * e;
      mean += bench;
      ++count;
    }
    if (count < 12)
      throw OverlapError("select_indicator: candidate '" + name +
                         "' overlaps benchmark by fewer than 12 months");
    double rmse = std::sqrt(se / count) / (mean / count);
    result.table.push_back({name, rmse});
    if (rmse < best_rmse) {  // strict: ties keep the earlier name
      best_rmse = rmse;
      result.best = name;
    }
  }
  return result;
}

void write_rmse_table_csv(const IndicatorSelection& selection, const std::string& ratio_name,
                          std::ostream& out) {
  out << "ratio";
  for (const auto& row : selection.table) out << ',' << row.name;
  out << ",best_indicator\n" << ratio_name;
  for (const auto& row : selection.table) out << ',' << format_double(row.relative_rmse);
  out << ',' << selection.best << '\n';
}

}  // namespace labor
