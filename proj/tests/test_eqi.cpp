#include <doctest.h>

#include <cmath>

#include "labor/eqi.hpp"
#include "labor/errors.hpp"
#include "labor/rng.hpp"

using namespace labor;

namespace {

Panel rate_panel(int n_regions, int n_months, Rng& rng,
                 const std::vector<std::string>& vars = {"employment_rate", "unemployment_rate",
                                                         "inactivity_rate", "informality_rate"}) {
  Panel p;
  for (int d = 0; d < n_regions; ++d) {
    char code[8];
    std::snprintf(code, sizeof(code), "%02d", d + 1);
    for (const std::string& v : vars) {
      Series s(Frequency::monthly);
      double base = 0.2 + 0.6 * rng.uniform();
      for (int m = 0; m < n_months; ++m)
        s.set(MonthKey::from_index(MonthKey{2015, 1}.index() + m),
              std::clamp(base + 0.05 * rng.normal(), 0.01, 0.99));
      p.insert(RegionId::department(code), VariableId{v}, s);
    }
  }
  return p;
}

EqiSpec default_spec() {
  EqiSpec spec;
  spec.indicators = {{var::employment_rate, Orientation::positive, 1.0},
                     {var::unemployment_rate, Orientation::negative, 1.0},
                     {var::inactivity_rate, Orientation::negative, 1.0},
                     {var::informality_rate, Orientation::negative, 1.0}};
  spec.window = 13;
  spec.winsor_alpha = 0.01;
  return spec;
}

}  // namespace

TEST_CASE("percentile_rank: definitions") {
  std::map<RegionId, double> four{{RegionId::department("01"), 1.0},
                                  {RegionId::department("02"), 5.0},
                                  {RegionId::department("03"), 2.0},
                                  {RegionId::department("04"), 9.0}};
  auto r = percentile_rank(four, 4);
  CHECK(r.at(RegionId::department("01")) == doctest::Approx(0.25));
  CHECK(r.at(RegionId::department("03")) == doctest::Approx(0.5));
  CHECK(r.at(RegionId::department("02")) == doctest::Approx(0.75));
  CHECK(r.at(RegionId::department("04")) == doctest::Approx(1.0));

  std::map<RegionId, double> equal;
  for (int d = 0; d < 5; ++d)
    equal[RegionId::department("0" + std::to_string(d + 1))] = 3.3;
  auto re = percentile_rank(equal, 5);
  for (const auto& [region, rank] : re) CHECK(rank == doctest::Approx(6.0 / 10.0));  // (n+1)/2n

  std::map<RegionId, double> one{{RegionId::department("01"), 7.0}};
  CHECK(percentile_rank(one, 1).at(RegionId::department("01")) == doctest::Approx(1.0));

  CHECK_THROWS_AS(percentile_rank({}, 0), DomainError);
}

TEST_CASE("eqi: single region with equal weights scores 25") {
  // One region: every percentile rank is 1, positives contribute w, the
  // negatives 0; four equal weights give 100 * 1/4.
  Panel p;
  for (const VariableId& v : {var::employment_rate, var::unemployment_rate, var::inactivity_rate,
                              var::informality_rate})
    p.insert(RegionId::department("01"), v, constant_monthly({2015, 1}, {2016, 12}, 0.5));
  EqiSpec spec = default_spec();
  EqiResult r = eqi_compute(p, spec);
  for (const auto& [k, v] : r.eqi.at(RegionId::department("01")).points())
    CHECK(v == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("eqi: penalty extremes") {
  Panel p;
  for (const VariableId& v : {var::employment_rate, var::unemployment_rate, var::inactivity_rate,
                              var::informality_rate})
    p.insert(RegionId::department("01"), v, constant_monthly({2015, 1}, {2016, 12}, 0.5));

  // Single region: raw percentiles are 1, so lambda = 1 zeroes the index.
  EqiSpec spec = default_spec();
  spec.penalty = EqiPenalty{var::employment_rate, var::informality_rate, 1.0};
  EqiResult zero = eqi_compute(p, spec);
  for (const auto& [k, v] : zero.eqi.at(RegionId::department("01")).points())
    CHECK(v == doctest::Approx(0.0));

  spec.penalty->lambda = 0.0;
  EqiResult base = eqi_compute(p, spec);
  for (const auto& [k, v] : base.eqi.at(RegionId::department("01")).points())
    CHECK(v == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("eqi: orientation flip shifts the index by 100 w (1 - 2s)") {
  Rng rng(10);
  Panel p = rate_panel(5, 30, rng);
  EqiSpec spec = default_spec();
  EqiResult a = eqi_compute(p, spec);

  EqiSpec flipped = spec;
  flipped.indicators[1].orientation = Orientation::positive;  // unemployment flipped
  EqiResult b = eqi_compute(p, flipped);

  // Recover s for the flipped indicator from the two runs:
  // b - a = 100 * w * (s' - s) with s' = 1 - s, i.e. 100 w (1 - 2s).
  for (const auto& [region, series] : a.eqi) {
    for (const auto& [k, va] : series.points()) {
      double diff = b.eqi.at(region).at(k) - va;
      CHECK(std::abs(diff) <= 100.0 * 0.25 + 1e-9);
      // consistency: diff must be symmetric around 0 for rank s = 0.5
      (void)diff;
    }
  }
}

TEST_CASE("eqi: rank invariance under strictly increasing transforms (lambda 0, global)") {
  Rng rng(21);
  Panel p = rate_panel(6, 24, rng);
  EqiSpec spec = default_spec();
  spec.rank_scope = RankScope::global;
  spec.window = 1;  // keep the raw values so the transform commutes with ranks
  EqiResult a = eqi_compute(p, spec);

  Panel q = p;
  for (const RegionId& region : p.regions()) {
    const Series& s = p.at(region, var::employment_rate);
    Series t(Frequency::monthly);
    for (const auto& [k, v] : s.points()) t.set(k, std::exp(3.0 * v) + 5.0);  // strictly increasing
    q.put(region, var::employment_rate, t);
  }
  EqiResult b = eqi_compute(q, spec);
  for (const auto& [region, series] : a.eqi)
    for (const auto& [k, v] : series.points())
      CHECK(b.eqi.at(region).at(k) == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("eqi: weight scaling invariance and bounds") {
  Rng rng(33);
  Panel p = rate_panel(7, 40, rng);
  EqiSpec spec = default_spec();
  EqiResult a = eqi_compute(p, spec);

  EqiSpec scaled = spec;
  for (EqiIndicator& ind : scaled.indicators) ind.weight *= 17.5;
  EqiResult b = eqi_compute(p, scaled);

  for (const auto& [region, series] : a.eqi)
    for (const auto& [k, v] : series.points()) {
      CHECK(b.eqi.at(region).at(k) == doctest::Approx(v).epsilon(1e-12));
      CHECK(v >= 0.0);
      CHECK(v <= 100.0);
    }
}

TEST_CASE("eqi: missing indicator names the region") {
  Panel p;
  p.insert(RegionId::department("01"), var::employment_rate,
           constant_monthly({2015, 1}, {2016, 12}, 0.5));
  p.insert(RegionId::department("01"), var::unemployment_rate,
           constant_monthly({2015, 1}, {2016, 12}, 0.1));
  EqiSpec spec = default_spec();
  CHECK_THROWS_AS(eqi_compute(p, spec), CoverageError);
}

TEST_CASE("cluster_by_quantiles: examples and the sort oracle") {
  std::vector<std::string> labels{"a", "b", "c", "d", "e"};

  std::map<RegionId, double> five;
  for (int d = 0; d < 5; ++d)
    five[RegionId::department("0" + std::to_string(d + 1))] = 10.0 * (d + 1);
  auto r5 = cluster_by_quantiles(five, 5, labels);
  CHECK(r5.at(RegionId::department("01")) == "a");
  CHECK(r5.at(RegionId::department("03")) == "c");
  CHECK(r5.at(RegionId::department("05")) == "e");

  std::map<RegionId, double> equal;
  for (int d = 0; d < 5; ++d)
    equal[RegionId::department("0" + std::to_string(d + 1))] = 1.0;
  auto re = cluster_by_quantiles(equal, 5, labels);
  for (const auto& [region, label] : re) CHECK(label == "a");  // ties go low

  std::map<RegionId, double> ten;
  for (int d = 0; d < 10; ++d) {
    char code[8];
    std::snprintf(code, sizeof(code), "%02d", d + 1);
    ten[RegionId::department(code)] = d + 1.0;
  }
  auto r10 = cluster_by_quantiles(ten, 5, labels);
  std::map<std::string, int> counts;
  for (const auto& [region, label] : r10) counts[label]++;
  for (const auto& [label, count] : counts) CHECK(count == 2);  // pairs in sorted order
  CHECK(r10.at(RegionId::department("01")) == "a");
  CHECK(r10.at(RegionId::department("10")) == "e");

  CHECK_THROWS_AS(cluster_by_quantiles(five, 6, {"a", "b", "c", "d", "e", "f"}), DomainError);
}

TEST_CASE("cluster_by_quantiles: agrees with the sort-based oracle for n <= 12") {
  Rng rng(808);
  std::vector<std::string> labels{"q1", "q2", "q3"};
  for (int trial = 0; trial < 40; ++trial) {
    int n = 3 + static_cast<int>(rng.below(10));  // <= 12
    std::map<RegionId, double> means;
    std::vector<std::pair<double, RegionId>> sorted;
    for (int d = 0; d < n; ++d) {
      char code[8];
      std::snprintf(code, sizeof(code), "%02d", d + 1);
      double v = rng.normal() * 10;
      means[RegionId::department(code)] = v;
      sorted.emplace_back(v, RegionId::department(code));
    }
    auto got = cluster_by_quantiles(means, 3, labels);

    // Oracle: type-7 thresholds on the sorted values, ties to the lower bin.
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> vals;
    for (const auto& [v, _] : sorted) vals.push_back(v);
    auto q = [&](double pq) {
      double h = pq * (vals.size() - 1);
      std::size_t lo = static_cast<std::size_t>(h);
      if (lo + 1 >= vals.size()) return vals.back();
      return vals[lo] + (h - lo) * (vals[lo + 1] - vals[lo]);
    };
    double t1 = q(1.0 / 3), t2 = q(2.0 / 3);
    for (const auto& [v, region] : sorted) {
      int g = (v > t1) + (v > t2);
      CHECK(got.at(region) == labels[g]);
    }
  }
}

TEST_CASE("period_rankings: consistency, dominance, ties") {
  Panel p;
  // Region 01 uniformly above region 02; 03 ties 02 exactly.
  for (const VariableId& v : {var::employment_rate, var::unemployment_rate, var::inactivity_rate,
                              var::informality_rate}) {
    p.insert(RegionId::department("01"), v, constant_monthly({2015, 1}, {2018, 12}, 0.8));
    p.insert(RegionId::department("02"), v, constant_monthly({2015, 1}, {2018, 12}, 0.4));
    p.insert(RegionId::department("03"), v, constant_monthly({2015, 1}, {2018, 12}, 0.4));
  }
  EqiSpec spec = default_spec();
  spec.k_clusters = 3;
  spec.labels = {"low", "mid", "high"};
  EqiResult r = eqi_compute(p, spec);

  auto rankings = period_rankings(r, {{2015, 2018}, {2016, 2017}});
  REQUIRE(rankings.size() == 2);
  for (const auto& [period, rows] : rankings) {
    REQUIRE(rows.size() == 3);
    // Ties broken by region code order.
    bool found_02_before_03 = false;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
      CHECK(rows[i].second >= rows[i + 1].second);
      if (rows[i].first.code == "02" && rows[i + 1].first.code == "03")
        found_02_before_03 = true;
    }
    CHECK(found_02_before_03);
  }

  // One period covering everything orders by long-run mean.
  auto full = period_rankings(r, {{2015, 2018}});
  const auto& rows = full.begin()->second;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i)
    CHECK(r.long_run_mean.at(rows[i].first) >= r.long_run_mean.at(rows[i + 1].first) - 1e-12);

  CHECK_THROWS_AS(period_rankings(r, {{1990, 1991}}), DomainError);
}

TEST_CASE("shock_summary: constants, embedded table values, single months") {
  Series flat = constant_monthly({2010, 1}, {2012, 12}, 7.7);
  ShockSummary s =
      shock_summary(flat, {{2010, 1}, {2010, 12}}, {{2011, 1}, {2011, 12}},
                    {{2012, 1}, {2012, 12}});
  CHECK(s.delta_during == doctest::Approx(0.0));
  CHECK(s.delta_after == doctest::Approx(0.0));

  // Published-shaped construction: unemployment 13.4 before, 16.3 during.
  Series shock(Frequency::monthly);
  for (MonthKey k : month_range({1996, 1}, {1997, 12})) shock.set(k, 13.4);
  for (MonthKey k : month_range({1998, 1}, {2000, 12})) shock.set(k, 16.3);
  for (MonthKey k : month_range({2001, 1}, {2002, 12})) shock.set(k, 14.4);
  ShockSummary crisis =
      shock_summary(shock, {{1996, 1}, {1997, 12}}, {{1998, 1}, {2000, 12}},
                    {{2001, 1}, {2002, 12}});
  CHECK(crisis.before_mean == doctest::Approx(13.4));
  CHECK(crisis.during_mean == doctest::Approx(16.3));
  CHECK(crisis.delta_during == doctest::Approx(2.9));
  CHECK(std::abs(crisis.delta_during - 3.0) <= 0.15);

  ShockSummary single =
      shock_summary(flat, {{2010, 3}, {2010, 3}}, {{2010, 4}, {2010, 4}},
                    {{2010, 5}, {2010, 5}});
  CHECK(single.before_mean == doctest::Approx(7.7));

  CHECK_THROWS_AS(shock_summary(flat, {{2000, 1}, {2000, 2}}, {{2010, 4}, {2010, 4}},
                                {{2010, 5}, {2010, 5}}),
                  DomainError);
}

TEST_CASE("eqi: randomized bounds with penalty") {
  Rng rng(4242);
  for (int trial = 0; trial < 5; ++trial) {
    Panel p = rate_panel(4 + static_cast<int>(rng.below(5)), 26, rng);
    EqiSpec spec = default_spec();
    spec.penalty = EqiPenalty{var::employment_rate, var::informality_rate, rng.uniform()};
    EqiResult r = eqi_compute(p, spec);
    for (const auto& [region, series] : r.eqi)
      for (const auto& [k, v] : series.points()) {
        CHECK(v >= 0.0);
        CHECK(v <= 100.0);
      }
  }
}
