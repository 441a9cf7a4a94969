#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "labor/errors.hpp"
#include "labor/rng.hpp"
#include "labor/splice.hpp"

using namespace labor;

namespace {

Series monthly_from(const std::vector<double>& v, int year, int month = 1) {
  Series s(Frequency::monthly);
  for (std::size_t m = 0; m < v.size(); ++m)
    s.set(MonthKey::from_index(MonthKey{year, month}.index() + static_cast<int>(m)), v[m]);
  return s;
}

// Independent Spearman for the brute-force donor oracle: ranks by sorting,
// then the explicit product-moment formula.
double spearman_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  auto rank_of = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = (i + j) / 2.0 + 1.0;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> ra = rank_of(a), rb = rank_of(b);
  double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double num = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return (va == 0 || vb == 0) ? 0.0 : num / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("rank correlations: known values") {
  std::vector<double> up{1, 2, 3, 4, 5, 6};
  std::vector<double> down{6, 5, 4, 3, 2, 1};
  CHECK(spearman(up, up) == doctest::Approx(1.0));
  CHECK(spearman(up, down) == doctest::Approx(-1.0));
  CHECK(kendall_tau_b(up, up) == doctest::Approx(1.0));
  CHECK(kendall_tau_b(up, down) == doctest::Approx(-1.0));

  std::vector<double> tied{1, 1, 2, 2, 3, 3};
  CHECK(spearman(tied, tied) == doctest::Approx(1.0));
  CHECK(kendall_tau_b(tied, tied) == doctest::Approx(1.0));
}

TEST_CASE("donor_map: perfect candidate selected; threshold enforced") {
  std::vector<double> target;
  Rng rng(1);
  for (int m = 0; m < 14; ++m) target.push_back(rng.normal());
  Series target_series = monthly_from(target, 2020);

  std::vector<double> noise;
  for (int m = 0; m < 14; ++m) noise.push_back(rng.normal());
  Series same = target_series;
  Series other = monthly_from(noise, 2020);

  std::vector<std::pair<RegionId, const Series*>> candidates{
      {RegionId::department("08"), &other}, {RegionId::department("11"), &same}};
  DonorMap d = donor_map(RegionId::department("05"), var::employed, target_series, candidates);
  CHECK(d.donor.code == "11");
  CHECK(d.spearman == doctest::Approx(1.0));
  CHECK(d.overlap_n == 14);

  // Nine overlapping points only: below the default threshold.
  Series short_series = monthly_from(std::vector<double>(target.begin(), target.begin() + 9), 2020);
  std::vector<std::pair<RegionId, const Series*>> short_candidates{
      {RegionId::department("08"), &short_series}};
  CHECK_THROWS_AS(
      donor_map(RegionId::department("05"), var::employed, target_series, short_candidates),
      NoDonorError);
}

TEST_CASE("donor_map: anti-monotone candidate loses to anything better") {
  // A strictly decreasing relation has Spearman -1; the argmax picks the
  // noisy candidate whenever its correlation exceeds -1.
  Rng rng(123);
  std::vector<double> target;
  for (int m = 0; m < 12; ++m) target.push_back(m + 0.01 * rng.normal());
  std::vector<double> negated;
  for (double v : target) negated.push_back(-v);
  std::vector<double> noise;
  for (int m = 0; m < 12; ++m) noise.push_back(rng.normal());

  Series target_series = monthly_from(target, 2020);
  Series neg_series = monthly_from(negated, 2020);
  Series noise_series = monthly_from(noise, 2020);

  CHECK(spearman_oracle(target, negated) == doctest::Approx(-1.0));
  double noise_rho = spearman_oracle(target, noise);
  REQUIRE(noise_rho > -1.0);

  std::vector<std::pair<RegionId, const Series*>> candidates{
      {RegionId::department("08"), &neg_series}, {RegionId::department("11"), &noise_series}};
  DonorMap d = donor_map(RegionId::department("05"), var::employed, target_series, candidates);
  CHECK(d.donor.code == "11");
  CHECK(d.spearman == doctest::Approx(noise_rho));
}

TEST_CASE("donor_map: agrees with the brute-force oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    int n_months = 10 + static_cast<int>(rng.below(15));  // <= 24
    int n_candidates = 2 + static_cast<int>(rng.below(7));  // <= 8
    std::vector<double> target;
    for (int m = 0; m < n_months; ++m) target.push_back(rng.normal());
    Series target_series = monthly_from(target, 2019);

    std::vector<Series> stored;
    std::vector<std::vector<double>> raw;
    for (int c = 0; c < n_candidates; ++c) {
      std::vector<double> v;
      for (int m = 0; m < n_months; ++m) v.push_back(rng.normal() + 0.3 * target[m]);
      raw.push_back(v);
      stored.push_back(monthly_from(v, 2019));
    }
    std::vector<std::pair<RegionId, const Series*>> candidates;
    for (int c = 0; c < n_candidates; ++c) {
      char code[8];
      std::snprintf(code, sizeof(code), "%02d", c + 10);
      candidates.emplace_back(RegionId::department(code), &stored[c]);
    }

    // Oracle scan with the same tie policy (correlation, overlap, code).
    int best = 0;
    double best_rho = spearman_oracle(target, raw[0]);
    for (int c = 1; c < n_candidates; ++c) {
      double rho = spearman_oracle(target, raw[c]);
      if (rho > best_rho) {
        best_rho = rho;
        best = c;
      }
    }
    DonorMap d =
        donor_map(RegionId::department("05"), var::employed, target_series, candidates);
    CHECK(d.donor == candidates[best].first);
    CHECK(d.spearman == doctest::Approx(best_rho).epsilon(1e-12));
  }
}

TEST_CASE("backward_splice: examples") {
  Series proxy = constant_monthly({2019, 1}, {2020, 6}, 4.0);
  SpliceAnchor anchor{{2020, 6}, 100.0};
  Series out = backward_splice(anchor, proxy, {{2019, 1}, {2020, 5}});
  for (const auto& [k, v] : out.points()) CHECK(v == doctest::Approx(100.0));
  CHECK(out.at({2020, 6}) == 100.0);  // anchor exact

  Series halving(Frequency::monthly);
  halving.set({2020, 5}, 2.0);
  halving.set({2020, 6}, 4.0);
  Series h = backward_splice({{2020, 6}, 100.0}, halving, {{2020, 5}, {2020, 5}});
  CHECK(h.at({2020, 5}) == doctest::Approx(50.0));

  Series zero(Frequency::monthly);
  zero.set({2020, 6}, 0.0);
  CHECK_THROWS_AS(backward_splice({{2020, 6}, 100.0}, zero, {{2020, 6}, {2020, 6}}),
                  DomainError);
}

TEST_CASE("backward_splice: anchor preservation and proxy-scale invariance") {
  Rng rng(99);
  std::vector<double> vals;
  for (int m = 0; m < 24; ++m) vals.push_back(1 + rng.uniform() * 5);
  Series proxy = monthly_from(vals, 2018);
  SpliceAnchor anchor{{2019, 12}, 42.0};

  Series a = backward_splice(anchor, proxy, {{2018, 1}, {2019, 11}});
  CHECK(a.at({2019, 12}) == 42.0);

  std::vector<double> scaled;
  for (double v : vals) scaled.push_back(v * -3.7);
  Series b = backward_splice(anchor, monthly_from(scaled, 2018), {{2018, 1}, {2019, 11}});
  for (const auto& [k, v] : a.points()) CHECK(b.at(k) == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("annual_splice: examples") {
  Series synthetic = constant_monthly({2020, 1}, {2020, 12}, 0.5);
  Series benchmark(Frequency::annual);
  benchmark.set(MonthKey::annual(2020), 0.6);
  Series out = annual_splice(synthetic, benchmark, ConversionRule::average);
  for (const auto& [k, v] : out.points()) CHECK(v == doctest::Approx(0.6).epsilon(1e-12));

  Series ramp(Frequency::monthly);
  for (int m = 1; m <= 12; ++m) ramp.set({2020, m}, m);
  Series bench2(Frequency::annual);
  bench2.set(MonthKey::annual(2020), 156.0);
  Series doubled = annual_splice(ramp, bench2, ConversionRule::sum);
  for (int m = 1; m <= 12; ++m) CHECK(doubled.at({2020, m}) == doctest::Approx(2.0 * m));

  // Already consistent input is a fixed point.
  Series consistent = annual_splice(doubled, bench2, ConversionRule::sum);
  for (const auto& [k, v] : doubled.points())
    CHECK(consistent.at(k) == doctest::Approx(v).epsilon(1e-12));

  Series zeros = constant_monthly({2020, 1}, {2020, 12}, 0.0);
  CHECK_THROWS_AS(annual_splice(zeros, benchmark, ConversionRule::average), DomainError);
}

TEST_CASE("annual_splice: exact benchmark consistency on random inputs") {
  Rng rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    Series synthetic(Frequency::monthly);
    for (int m = 0; m < 36; ++m)
      synthetic.set(MonthKey::from_index(MonthKey{2015, 1}.index() + m), 0.5 + rng.uniform());
    Series benchmark(Frequency::annual);
    for (int y = 2015; y <= 2017; ++y) benchmark.set(MonthKey::annual(y), 5 + rng.uniform());
    Series out = annual_splice(synthetic, benchmark, ConversionRule::average);
    for (int y = 2015; y <= 2017; ++y) {
      double mean = 0;
      for (int m = 1; m <= 12; ++m) mean += out.at({y, m});
      mean /= 12;
      CHECK(mean == doctest::Approx(benchmark.at(MonthKey::annual(y))).epsilon(1e-12));
    }
  }
}

TEST_CASE("national_align: examples") {
  Series a = constant_monthly({2020, 1}, {2020, 1}, 30.0);
  Series b = constant_monthly({2020, 1}, {2020, 1}, 70.0);
  Series national = constant_monthly({2020, 1}, {2020, 1}, 200.0);
  std::vector<std::pair<RegionId, const Series*>> members{
      {RegionId::department("05"), &a}, {RegionId::department("08"), &b}};
  auto aligned = national_align(members, national);
  CHECK(aligned.at(RegionId::department("05")).at({2020, 1}) == doctest::Approx(60.0));
  CHECK(aligned.at(RegionId::department("08")).at({2020, 1}) == doctest::Approx(140.0));

  Series consistent = constant_monthly({2020, 1}, {2020, 1}, 100.0);
  std::vector<std::pair<RegionId, const Series*>> already{
      {RegionId::department("05"), &a}, {RegionId::department("08"), &b}};
  auto unchanged = national_align(already, consistent);
  CHECK(unchanged.at(RegionId::department("05")).at({2020, 1}) == doctest::Approx(30.0));

  Series z = constant_monthly({2020, 1}, {2020, 1}, 0.0);
  std::vector<std::pair<RegionId, const Series*>> zeros{{RegionId::department("05"), &z},
                                                        {RegionId::department("08"), &z}};
  CHECK_THROWS_AS(national_align(zeros, national), DomainError);
}

TEST_CASE("national_align: exact totals and preserved proportions, up to 33 regions") {
  Rng rng(2718);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 2 + static_cast<int>(rng.below(32));
    std::vector<Series> stored;
    for (int d = 0; d < n; ++d) {
      std::vector<double> v;
      for (int m = 0; m < 6; ++m) v.push_back(1 + 100 * rng.uniform());
      stored.push_back(monthly_from(v, 2020));
    }
    std::vector<std::pair<RegionId, const Series*>> members;
    for (int d = 0; d < n; ++d) {
      char code[8];
      std::snprintf(code, sizeof(code), "%02d", d + 1);
      members.emplace_back(RegionId::department(code), &stored[d]);
    }
    std::vector<double> nat;
    for (int m = 0; m < 6; ++m) nat.push_back(500 + 500 * rng.uniform());
    Series national = monthly_from(nat, 2020);

    auto aligned = national_align(members, national);
    for (int m = 0; m < 6; ++m) {
      MonthKey k = MonthKey::from_index(MonthKey{2020, 1}.index() + m);
      double sum = 0;
      for (const auto& [region, _] : members) sum += aligned.at(region).at(k);
      CHECK(std::abs(sum - national.at(k)) / national.at(k) <= 1e-10);
      // Within-month proportions preserved.
      for (int d = 1; d < n; ++d) {
        double before = stored[d].at(k) / stored[0].at(k);
        double after = aligned.at(members[d].first).at(k) / aligned.at(members[0].first).at(k);
        CHECK(after == doctest::Approx(before).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("reconcile_informality: consistent inputs are a lambda=1 fixed point") {
  Series r1 = constant_monthly({2020, 1}, {2020, 3}, 0.4);
  Series r2 = constant_monthly({2020, 1}, {2020, 3}, 0.6);
  Series e = constant_monthly({2020, 1}, {2020, 3}, 100.0);
  Series national = constant_monthly({2020, 1}, {2020, 3}, 0.5);
  std::vector<std::pair<RegionId, const Series*>> rates{{RegionId::department("05"), &r1},
                                                        {RegionId::department("08"), &r2}};
  std::vector<std::pair<RegionId, const Series*>> employment{
      {RegionId::department("05"), &e}, {RegionId::department("08"), &e}};
  ReconcileResult res = reconcile_informality(rates, employment, national);
  for (const auto& [k, l] : res.schedule.lambda.points())
    CHECK(l == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.calibrated_rates.at(RegionId::department("05")).at({2020, 1}) ==
        doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("reconcile_informality: lambda formula on the worked example") {
  Series r1 = constant_monthly({2020, 1}, {2020, 1}, 0.5);
  Series r2 = constant_monthly({2020, 1}, {2020, 1}, 0.7);
  Series e = constant_monthly({2020, 1}, {2020, 1}, 100.0);
  Series national = constant_monthly({2020, 1}, {2020, 1}, 0.5);
  std::vector<std::pair<RegionId, const Series*>> rates{{RegionId::department("05"), &r1},
                                                        {RegionId::department("08"), &r2}};
  std::vector<std::pair<RegionId, const Series*>> employment{
      {RegionId::department("05"), &e}, {RegionId::department("08"), &e}};
  ReconcileResult res = reconcile_informality(rates, employment, national);
  CHECK(res.schedule.lambda.at({2020, 1}) == doctest::Approx(100.0 / 120.0).epsilon(1e-9));
  CHECK(res.calibrated_rates.at(RegionId::department("05")).at({2020, 1}) ==
        doctest::Approx(0.41667).epsilon(1e-4));
  CHECK(res.calibrated_rates.at(RegionId::department("08")).at({2020, 1}) ==
        doctest::Approx(0.58333).epsilon(1e-4));
}

TEST_CASE("reconcile_informality: one region collapses to the national rate") {
  Series r = constant_monthly({2020, 1}, {2020, 1}, 0.3);
  Series e = constant_monthly({2020, 1}, {2020, 1}, 500.0);
  Series national = constant_monthly({2020, 1}, {2020, 1}, 0.45);
  std::vector<std::pair<RegionId, const Series*>> rates{{RegionId::department("05"), &r}};
  std::vector<std::pair<RegionId, const Series*>> employment{{RegionId::department("05"), &e}};
  ReconcileResult res = reconcile_informality(rates, employment, national);
  CHECK(res.calibrated_rates.at(RegionId::department("05")).at({2020, 1}) ==
        doctest::Approx(0.45).epsilon(1e-12));
}

TEST_CASE("reconcile_informality: conservation under forced clipping") {
  Rng rng(31337);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 3 + static_cast<int>(rng.below(5));
    std::vector<Series> rate_store, emp_store;
    for (int d = 0; d < n; ++d) {
      // Some regions start near saturation so scaling pushes them past 1.
      double base = d == 0 ? 0.95 : 0.3 + 0.4 * rng.uniform();
      rate_store.push_back(constant_monthly({2020, 1}, {2020, 4}, base));
      emp_store.push_back(constant_monthly({2020, 1}, {2020, 4}, 50 + 200 * rng.uniform()));
    }
    std::vector<std::pair<RegionId, const Series*>> rates, employment;
    for (int d = 0; d < n; ++d) {
      char code[8];
      std::snprintf(code, sizeof(code), "%02d", d + 1);
      rates.emplace_back(RegionId::department(code), &rate_store[d]);
      employment.emplace_back(RegionId::department(code), &emp_store[d]);
    }
    Series national = constant_monthly({2020, 1}, {2020, 4}, 0.6 + 0.3 * rng.uniform());
    ReconcileResult res = reconcile_informality(rates, employment, national);

    for (const auto& [k, nat_rate] : national.points()) {
      double total_counts = 0, total_e = 0;
      for (int d = 0; d < n; ++d) {
        double cal = res.calibrated_counts.at(rates[d].first).at(k);
        double e_v = emp_store[d].at(k);
        CHECK(cal <= e_v * (1 + 1e-9));  // rates capped at 1
        total_counts += cal;
        total_e += e_v;
      }
      CHECK(std::abs(total_counts - nat_rate * total_e) / (nat_rate * total_e) <= 1e-10);
    }
  }
}

TEST_CASE("reconcile_informality: degenerate inputs") {
  Series zero_rate = constant_monthly({2020, 1}, {2020, 1}, 0.0);
  Series e = constant_monthly({2020, 1}, {2020, 1}, 100.0);
  Series national = constant_monthly({2020, 1}, {2020, 1}, 0.5);
  std::vector<std::pair<RegionId, const Series*>> rates{{RegionId::department("05"), &zero_rate}};
  std::vector<std::pair<RegionId, const Series*>> employment{{RegionId::department("05"), &e}};
  CHECK_THROWS_AS(reconcile_informality(rates, employment, national), DomainError);

  Series above_capacity = constant_monthly({2020, 1}, {2020, 1}, 1.2);
  std::vector<std::pair<RegionId, const Series*>> nat2{{RegionId::department("05"), &e}};
  Series half_rate = constant_monthly({2020, 1}, {2020, 1}, 0.5);
  std::vector<std::pair<RegionId, const Series*>> rates2{{RegionId::department("05"), &half_rate}};
  CHECK_THROWS_AS(reconcile_informality(rates2, nat2, above_capacity),
                  ReconciliationCapacityError);
}
