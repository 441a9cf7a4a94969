#include "labor/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "labor/accounts.hpp"
#include "labor/csv.hpp"
#include "labor/eqi.hpp"
#include "labor/interp.hpp"
#include "labor/smooth.hpp"
#include "labor/splice.hpp"
#include "labor/tempdisagg.hpp"

namespace labor {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Digests and manifest

std::string digest_bytes(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string digest_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("digest: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return digest_bytes(ss.str());
}

void RunManifest::write_json(const std::string& path) const {
  json j;
  j["tool_version"] = tool_version;
  j["seed"] = seed;
  j["config_digest"] = config_digest;
  j["input_digests"] = input_digests;
  json stages_j = json::array();
  for (const StageRecord& s : stages) {
    json certs = json::array();
    for (const Certificate& c : s.certificates)
      certs.push_back({{"name", c.name},
                       {"passed", c.passed},
                       {"value", c.value},
                       {"threshold", c.threshold}});
    stages_j.push_back({{"name", s.name},
                        {"duration_ms", s.duration_ms},
                        {"certificates", certs},
                        {"notes", s.notes}});
  }
  j["stages"] = stages_j;
  j["output_digests"] = output_digests;
  j["evaluation"] = evaluation;
  j["all_certificates_passed"] = all_certificates_passed;
  if (!error.empty()) j["error"] = error;
  std::ofstream f(path);
  if (!f) throw IoError("manifest: cannot open '" + path + "' for writing");
  f << j.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Config

namespace {

est::MlpConfig mlp_from_json(const json& j, est::MlpConfig base) {
  if (j.contains("hidden_dim")) base.hidden_dim = j["hidden_dim"].get<int>();
  if (j.contains("blocks")) base.blocks = j["blocks"].get<int>();
  if (j.contains("dropout")) base.dropout = j["dropout"].get<double>();
  if (j.contains("residual")) base.residual = j["residual"].get<bool>();
  if (j.contains("loss")) {
    auto k = est::loss_from_string(j["loss"].get<std::string>());
    if (!k) throw SchemaError("config: unknown loss '" + j["loss"].get<std::string>() + "'");
    base.loss = *k;
  }
  if (j.contains("monotone_features"))
    for (const auto& f : j["monotone_features"]) base.monotone_features.insert(f.get<std::string>());
  if (j.contains("huber_delta")) base.huber_delta = j["huber_delta"].get<double>();
  if (j.contains("beta_phi")) base.beta_phi = j["beta_phi"].get<double>();
  if (j.contains("lr")) base.lr = j["lr"].get<double>();
  if (j.contains("cosine_lr")) base.cosine_lr = j["cosine_lr"].get<bool>();
  if (j.contains("weight_decay")) base.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("batch_cap")) base.batch_cap = j["batch_cap"].get<int>();
  if (j.contains("patience")) base.patience = j["patience"].get<int>();
  if (j.contains("min_delta")) base.min_delta = j["min_delta"].get<double>();
  if (j.contains("max_epochs")) base.max_epochs = j["max_epochs"].get<int>();
  return base;
}

json mlp_to_json(const est::MlpConfig& c) {
  return {{"hidden_dim", c.hidden_dim},
          {"blocks", c.blocks},
          {"dropout", c.dropout},
          {"residual", c.residual},
          {"loss", est::to_string(c.loss)},
          {"monotone_features", c.monotone_features},
          {"huber_delta", c.huber_delta},
          {"beta_phi", c.beta_phi},
          {"lr", c.lr},
          {"cosine_lr", c.cosine_lr},
          {"weight_decay", c.weight_decay},
          {"batch_cap", c.batch_cap},
          {"patience", c.patience},
          {"min_delta", c.min_delta},
          {"max_epochs", c.max_epochs}};
}

}  // namespace

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw SchemaError("config: invalid JSON in '" + path + "': " + e.what());
  }

  PipelineConfig c;
  c.panel_path = j.at("inputs").at("panel").get<std::string>();
  c.truth_path = j.at("inputs").value("truth", "");
  c.out_dir = j.value("out_dir", "out");
  c.seed = j.value("seed", 42ULL);

  const json& r = j.at("regions");
  c.departments = r.at("departments").get<std::vector<std::string>>();
  c.observed_departments = r.at("observed").get<std::vector<std::string>>();
  for (const auto& [name, members] : r.at("clusters").items())
    c.clusters[name] = members.get<std::vector<std::string>>();
  if (r.contains("names"))
    for (const auto& [code, name] : r.at("names").items())
      c.dept_names[code] = name.get<std::string>();
  if (r.contains("donor_overrides"))
    for (const auto& [code, donor] : r.at("donor_overrides").items())
      c.donor_overrides[code] = donor.get<std::string>();

  const json& s = j.at("span");
  c.start_year = s.at("start_year").get<int>();
  c.end_year = s.at("end_year").get<int>();
  c.benchmark_start_year = s.at("benchmark_start_year").get<int>();
  c.dept_monthly_start_year = s.at("dept_monthly_start_year").get<int>();
  c.city_monthly_start_year = s.at("city_monthly_start_year").get<int>();
  c.informality_start_year = s.at("informality_start_year").get<int>();

  if (j.contains("national")) {
    const json& n = j["national"];
    if (n.contains("indicator_candidates"))
      c.indicator_candidates = n["indicator_candidates"].get<std::vector<std::string>>();
    c.smooth_window = n.value("smooth_window", c.smooth_window);
    c.smooth_unemployment = n.value("smooth_unemployment", c.smooth_unemployment);
    c.stable_span_months = n.value("stable_span_months", c.stable_span_months);
  }
  if (j.contains("cities")) {
    c.donor_gate = j["cities"].value("donor_gate", c.donor_gate);
    c.min_overlap = j["cities"].value("min_overlap", c.min_overlap);
  }
  if (j.contains("features")) {
    const json& fj = j["features"];
    if (fj.contains("macro")) c.macro_features = fj["macro"].get<std::vector<std::string>>();
    if (fj.contains("macro_transforms")) {
      c.macro_transforms.clear();
      for (const auto& [name, transform] : fj["macro_transforms"].items())
        c.macro_transforms[name] = transform.get<std::string>();
    }
    if (fj.contains("dept_covariates"))
      c.dept_covariates = fj["dept_covariates"].get<std::vector<std::string>>();
    if (fj.contains("cluster_signal_vars"))
      c.cluster_signal_vars = fj["cluster_signal_vars"].get<std::vector<std::string>>();
    c.wage_base_year = fj.value("wage_base_year", 0);
  }
  if (j.contains("estimator")) {
    c.mlp = mlp_from_json(j["estimator"], c.mlp);
    c.holdout_frac = j["estimator"].value("holdout_frac", c.holdout_frac);
  }
  if (j.contains("informality")) c.informality_mlp = mlp_from_json(j["informality"], c.informality_mlp);
  if (j.contains("eqi")) {
    const json& e = j["eqi"];
    c.eqi_lambda = e.value("lambda", c.eqi_lambda);
    c.eqi_window = e.value("window", c.eqi_window);
    c.eqi_winsor_alpha = e.value("winsor_alpha", c.eqi_winsor_alpha);
    c.eqi_k = e.value("k_clusters", c.eqi_k);
    if (e.contains("periods"))
      for (const auto& p : e["periods"])
        c.eqi_periods.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  }
  return c;
}

void PipelineConfig::write_json(const std::string& path) const {
  json j;
  j["inputs"] = {{"panel", panel_path}};
  if (!truth_path.empty()) j["inputs"]["truth"] = truth_path;
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  j["regions"] = {{"departments", departments},
                  {"observed", observed_departments},
                  {"clusters", clusters}};
  if (!dept_names.empty()) j["regions"]["names"] = dept_names;
  if (!donor_overrides.empty()) j["regions"]["donor_overrides"] = donor_overrides;
  j["span"] = {{"start_year", start_year},
               {"end_year", end_year},
               {"benchmark_start_year", benchmark_start_year},
               {"dept_monthly_start_year", dept_monthly_start_year},
               {"city_monthly_start_year", city_monthly_start_year},
               {"informality_start_year", informality_start_year}};
  j["national"] = {{"indicator_candidates", indicator_candidates},
                   {"smooth_window", smooth_window},
                   {"smooth_unemployment", smooth_unemployment},
                   {"stable_span_months", stable_span_months}};
  j["cities"] = {{"donor_gate", donor_gate}, {"min_overlap", min_overlap}};
  j["features"] = {{"macro", macro_features},
                   {"macro_transforms", macro_transforms},
                   {"dept_covariates", dept_covariates},
                   {"cluster_signal_vars", cluster_signal_vars},
                   {"wage_base_year", wage_base_year}};
  j["estimator"] = mlp_to_json(mlp);
  j["estimator"]["holdout_frac"] = holdout_frac;
  j["informality"] = mlp_to_json(informality_mlp);
  j["eqi"] = {{"lambda", eqi_lambda},
              {"window", eqi_window},
              {"winsor_alpha", eqi_winsor_alpha},
              {"k_clusters", eqi_k}};
  if (!eqi_periods.empty()) {
    json periods = json::array();
    for (const auto& [a, b] : eqi_periods) periods.push_back({a, b});
    j["eqi"]["periods"] = periods;
  }
  std::ofstream f(path);
  if (!f) throw IoError("config: cannot open '" + path + "' for writing");
  f << j.dump(1) << '\n';
}

void PipelineConfig::validate() const {
  if (!fs::exists(panel_path))
    throw IoError("pre-flight: input panel file does not exist: " + panel_path);
  if (!truth_path.empty() && !fs::exists(truth_path))
    throw IoError("pre-flight: truth file does not exist: " + truth_path);
  if (departments.empty()) throw SchemaError("config: no departments");
  if (start_year > end_year) throw SchemaError("config: start_year after end_year");
  if (benchmark_start_year < start_year || benchmark_start_year > end_year)
    throw SchemaError("config: benchmark_start_year outside the span");
  std::map<std::string, bool> covered;
  for (const auto& [name, members] : clusters) {
    bool has_observed = false;
    for (const std::string& code : members) {
      covered[code] = true;
      if (std::find(observed_departments.begin(), observed_departments.end(), code) !=
          observed_departments.end())
        has_observed = true;
    }
    if (!has_observed)
      throw CoverageError("config: cluster '" + name + "' has no observed department");
  }
  for (const std::string& code : departments)
    if (!covered.count(code))
      throw CoverageError("config: department " + code + " assigned to no cluster");
}

PipelineConfig default_fixture_config(const SyntheticFixture& fixture,
                                      const std::string& panel_path,
                                      const std::string& truth_path,
                                      const std::string& out_dir) {
  PipelineConfig c;
  c.panel_path = panel_path;
  c.truth_path = truth_path;
  c.out_dir = out_dir;
  c.departments = fixture.departments;
  c.observed_departments = fixture.observed_departments;
  c.clusters = fixture.clusters;
  c.start_year = fixture.span.first.year;
  c.end_year = fixture.span.last.year;
  c.benchmark_start_year = fixture.benchmark_start_year;
  c.dept_monthly_start_year = fixture.dept_monthly_start_year;
  c.city_monthly_start_year = fixture.city_monthly_start_year;
  c.informality_start_year = fixture.informality_start_year;
  c.eqi_periods = {{c.start_year, (c.start_year + c.end_year) / 2},
                   {(c.start_year + c.end_year) / 2 + 1, c.end_year}};
  // Desk-scale data: wide net, no dropout noise, aggressive learning rate
  // with the cosine schedule, generous patience.
  c.mlp.hidden_dim = 64;
  c.mlp.blocks = 2;
  c.mlp.dropout = 0.0;
  c.mlp.lr = 1e-2;
  c.mlp.min_delta = 1e-6;
  c.mlp.patience = 300;
  c.mlp.max_epochs = 600;
  c.informality_mlp = c.mlp;
  c.informality_mlp.max_epochs = 400;
  return c;
}

// ---------------------------------------------------------------------------
// Pipeline internals

namespace {

struct StageClock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

const std::vector<VariableId>& core_levels() {
  static const std::vector<VariableId> v = {var::employed, var::unemployed, var::pea, var::pet,
                                            var::inactive};
  return v;
}

// Mutable state threaded through the stages.
struct PipelineState {
  Panel input;      // observed panel as loaded
  Panel national;   // monthly national levels + rates, full span
  std::map<std::string, std::map<std::string, Series>> city_levels;  // var -> dept code -> series
  std::map<std::string, std::map<std::string, Series>> city_rates;
  std::map<std::string, std::map<std::string, Series>> dept_levels;  // benchmark era
  std::map<std::string, std::map<std::string, Series>> final_levels; // full span
  std::map<std::string, Series> dept_informality;                    // full span, raw predictions
  Series national_informality;                                       // full span
  est::FeatureMatrix features;                                       // dept-month design
  std::vector<DonorMap> donors;
  std::vector<est::ValidationReport> validation_reports;
};

double max_rel_dev(const Series& a, const Series& b) {
  double worst = 0;
  for (const auto& [k, v] : a.points()) {
    auto w = b.get(k);
    if (!w) continue;
    worst = std::max(worst, std::abs(v - *w) / std::max(std::abs(*w), 1e-12));
  }
  return worst;
}

Series series_ratio(const Series& num, const Series& den) {
  Series out(num.frequency());
  for (const auto& [k, v] : num.points()) {
    auto d = den.get(k);
    if (!d) continue;
    if (*d == 0) throw DomainError("ratio: zero denominator at " + k.str());
    out.set(k, v / *d);
  }
  return out;
}

Series series_product(const Series& a, const Series& b) {
  Series out(a.frequency());
  for (const auto& [k, v] : a.points()) {
    auto w = b.get(k);
    if (w) out.set(k, v * *w);
  }
  return out;
}

Series series_diff(const Series& a, const Series& b) {
  Series out(a.frequency());
  for (const auto& [k, v] : a.points()) {
    auto w = b.get(k);
    if (w) out.set(k, v - *w);
  }
  return out;
}

// Observed window kept verbatim; earlier months follow the proxy's dynamics
// anchored at the first observed value.
Series integrate_backcast(const Series& proxy, const Series& observed, MonthKey span_start) {
  Series out = observed;
  MonthKey t_star = observed.first_key();
  if (t_star.index() > span_start.index()) {
    SpliceAnchor anchor{t_star, observed.at(t_star)};
    Series back = backward_splice(anchor, proxy, {span_start, t_star.prev()});
    for (const auto& [k, v] : back.points())
      if (!out.has(k)) out.set(k, v);
  }
  return out;
}

const Series& need(const Panel& p, const RegionId& r, const VariableId& v, const char* stage) {
  const Series* s = p.find(r, v);
  if (!s)
    throw CoverageError(std::string(stage) + ": required series " + r.str() + "/" + v.name +
                        " missing from the input panel");
  return *s;
}

}  // namespace

// ---------------------------------------------------------------------------
// run_pipeline

RunManifest run_pipeline(const PipelineConfig& config) {
  RunManifest manifest;
  manifest.seed = config.seed;

  config.validate();
  fs::create_directories(config.out_dir);
  manifest.input_digests["panel"] = digest_file(config.panel_path);
  if (!config.truth_path.empty())
    manifest.input_digests["truth"] = digest_file(config.truth_path);
  {
    std::ostringstream cfg;
    config.write_json(config.out_dir + "/config_echo.json");
    manifest.config_digest = digest_file(config.out_dir + "/config_echo.json");
  }

  PipelineState st;
  auto out_path = [&](const std::string& name) { return config.out_dir + "/" + name; };
  auto record_output = [&](const std::string& name) {
    manifest.output_digests[name] = digest_file(out_path(name));
  };

  const RegionId nat = RegionId::national();
  const MonthSpan span = config.span();
  const MonthKey bench_start{config.benchmark_start_year, 1};

  auto run_stage = [&](const std::string& name, auto&& body) {
    StageRecord record;
    record.name = name;
    StageClock clock;
    try {
      body(record);
    } catch (const std::exception& e) {
      record.duration_ms = clock.ms();
      manifest.stages.push_back(record);
      manifest.error = "stage " + name + ": " + e.what();
      manifest.all_certificates_passed = false;
      manifest.write_json(out_path("manifest.json"));
      throw PipelineError(name, e.what());
    }
    record.duration_ms = clock.ms();
    manifest.stages.push_back(record);
  };

  // -------------------------------------------------------------- stage 1
  run_stage("national_baseline", [&](StageRecord& rec) {
    IngestResult loaded = ingest_csv_file(config.panel_path);
    if (!loaded.rejects.empty())
      rec.notes.push_back(std::to_string(loaded.rejects.size()) + " rejected input rows");
    st.input = std::move(loaded.panel);

    const Series& pop_annual = need(st.input, nat, var::population, "national_baseline");
    const Series& pet_annual = need(st.input, nat, var::pet, "national_baseline");
    std::vector<MonthKey> grid = month_range(span.first, span.last);

    InterpResult pop_i = interpolate(pop_annual, grid, InterpMethod::akima);
    InterpResult pet_i = interpolate(pet_annual, grid, InterpMethod::linear);
    rec.notes.push_back(std::string("population interpolation: ") +
                        to_string(pop_i.method_used));
    rec.notes.push_back(std::string("pet interpolation: ") + to_string(pet_i.method_used));

    // Survey-era monthly stocks override the interpolation; earlier months
    // follow the interpolated dynamics anchored at the seam.
    Series pop_m = integrate_backcast(
        pop_i.series, need(st.input, nat, VariableId{"population_monthly"}, "national_baseline"),
        span.first);
    Series pet_m = integrate_backcast(
        pet_i.series, need(st.input, nat, VariableId{"pet_monthly"}, "national_baseline"),
        span.first);

    st.national.put(nat, var::population, pop_m);
    st.national.put(nat, var::pet, pet_m);

    bool cover = pop_m.covers(span.first, span.last) && pet_m.covers(span.first, span.last);
    rec.certificates.push_back({"national_stocks_cover_span", cover, cover ? 1.0 : 0.0, 1.0});
  });

  // -------------------------------------------------------------- stage 2
  run_stage("national_disagg", [&](StageRecord& rec) {
    const Series& pea_annual = need(st.input, nat, var::pea, "national_disagg");
    const Series& pet_annual = need(st.input, nat, var::pet, "national_disagg");
    const Series& unemp_annual = need(st.input, nat, var::unemployed, "national_disagg");

    // Annual ratios over the product years only (the lead anchor year serves
    // interpolation, not disaggregation).
    Series part_annual(Frequency::annual), unemp_ratio_annual(Frequency::annual);
    for (int y = config.start_year; y <= config.end_year; ++y) {
      MonthKey k = MonthKey::annual(y);
      part_annual.set(k, pea_annual.at(k) / pet_annual.at(k));
      unemp_ratio_annual.set(k, unemp_annual.at(k) / pea_annual.at(k));
    }

    // Candidate indicator menu: macros plus the deflated wage composite.
    std::map<std::string, Series> candidates;
    for (const std::string& name : config.indicator_candidates) {
      if (name == "deflated_wage") {
        candidates[name] = deflated_wage_index(
            need(st.input, nat, VariableId{"min_wage"}, "national_disagg"),
            need(st.input, nat, VariableId{"transport_subsidy"}, "national_disagg"),
            need(st.input, nat, VariableId{"cpi"}, "national_disagg"),
            config.wage_base_year ? config.wage_base_year : config.start_year);
      } else {
        candidates[name] = need(st.input, nat, VariableId{name}, "national_disagg");
      }
    }

    const Series& pea_bench =
        need(st.input, nat, VariableId{"pea_monthly"}, "national_disagg");
    const Series& pet_bench =
        need(st.input, nat, VariableId{"pet_monthly"}, "national_disagg");
    const Series& unemp_bench =
        need(st.input, nat, VariableId{"unemployed_monthly"}, "national_disagg");
    Series part_bench = series_ratio(pea_bench, pet_bench);
    Series unemp_rate_bench = series_ratio(unemp_bench, pea_bench);

    MonthKey stable_hi = span.last;
    MonthKey stable_lo =
        MonthKey::from_index(stable_hi.index() - (config.stable_span_months - 1));
    if (stable_lo < part_bench.first_key()) stable_lo = part_bench.first_key();

    auto disaggregate = [&](const Series& annual, const Series& bench,
                            const std::string& label) {
      IndicatorSelection sel =
          select_indicator(annual, ConversionRule::average, candidates, bench);
      {
        std::ofstream f(out_path("rmse_table_" + label + ".csv"));
        write_rmse_table_csv(sel, label, f);
      }
      record_output("rmse_table_" + label + ".csv");
      rec.notes.push_back(label + " indicator: " + sel.best);

      DisaggProblem problem;
      problem.annual_target = annual;
      problem.indicators = {candidates.at(sel.best)};
      problem.rule = ConversionRule::average;
      ChowLinFit fit = chowlin_fit(problem);
      DistributionCertificate cert;
      Series dist = distribute(fit, problem, &cert);
      rec.certificates.push_back(
          {"chowlin_aggregation_" + label, cert.max_relative_deviation <= 1e-8,
           cert.max_relative_deviation, 1e-8});
      rec.notes.push_back(label + " rho: " + format_double(fit.rho));
      return dist;
    };

    Series part_cl = disaggregate(part_annual, part_bench, "participation_rate");
    Series unemp_cl = disaggregate(unemp_ratio_annual, unemp_rate_bench, "unemployment_rate");

    // Participation: stable-period median rescale against the survey ratio,
    // then the survey window verbatim.
    Series part_rescaled = participation_rescale(part_cl, part_bench, {stable_lo, stable_hi});
    Series part_m = part_rescaled;
    for (const auto& [k, v] : part_bench.points()) part_m.set(k, v);

    // Unemployment ratio: optional smoothing, then anchored backcast (the
    // proxy scale cancels, so the source-level bias drops out).
    Series unemp_proxy = unemp_cl;
    if (config.smooth_unemployment) {
      SmoothSpec sm;
      sm.window = config.smooth_window;
      unemp_proxy = moving_average(unemp_proxy, sm);
      rec.notes.push_back("unemployment ratio smoothed, window " +
                          std::to_string(config.smooth_window));
    }
    Series unemp_m = integrate_backcast(unemp_proxy, unemp_rate_bench, span.first);

    const Series& pet_m = st.national.at(nat, var::pet);
    const Series& pop_m = st.national.at(nat, var::population);
    Series pea_m = series_product(part_m, pet_m);
    // Survey-era levels verbatim.
    for (const auto& [k, v] : pea_bench.points()) pea_m.set(k, v);
    Series unemp_level = series_product(unemp_m, pea_m);
    for (const auto& [k, v] : unemp_bench.points()) unemp_level.set(k, v);
    Series emp_level = series_diff(pea_m, unemp_level);

    Panel nat_panel;
    nat_panel.insert(nat, var::employed, emp_level);
    nat_panel.insert(nat, var::pea, pea_m);
    nat_panel.insert(nat, var::pet, pet_m);
    nat_panel.insert(nat, var::population, pop_m);
    ClosureResult closed = close_identities(nat_panel);
    {
      std::ofstream f(out_path("residuals_national.json"));
      closed.report.to_json(f);
    }
    record_output("residuals_national.json");

    for (const VariableId& v : core_levels())
      st.national.put(nat, v, closed.panel.at(nat, v));

    // Post-closure identity residuals must vanish.
    double worst = 0;
    const Series& e = st.national.at(nat, var::employed);
    const Series& u = st.national.at(nat, var::unemployed);
    const Series& p = st.national.at(nat, var::pea);
    const Series& t = st.national.at(nat, var::pet);
    const Series& ia = st.national.at(nat, var::inactive);
    for (const auto& [k, pv] : p.points()) {
      worst = std::max(worst, std::abs(pv - e.at(k) - u.at(k)) / std::max(pv, 1e-12));
      worst = std::max(worst, std::abs(t.at(k) - pv - ia.at(k)) / std::max(t.at(k), 1e-12));
    }
    rec.certificates.push_back({"national_identity_closure", worst <= 1e-12, worst, 1e-12});

    bool pet_ok = true;
    for (const auto& [k, tv] : t.points())
      if (tv > pop_m.at(k) * (1 + 1e-12)) pet_ok = false;
    rec.certificates.push_back(
        {"national_pet_within_population", pet_ok, pet_ok ? 0.0 : 1.0, 0.0});

    st.national.put(nat, var::employment_rate, series_ratio(e, t));
    st.national.put(nat, var::unemployment_rate, series_ratio(u, p));
    st.national.put(nat, var::participation_rate, series_ratio(p, t));
    st.national.put(nat, var::inactivity_rate, series_ratio(ia, t));
  });

  // -------------------------------------------------------------- stage 3
  run_stage("city_signals", [&](StageRecord& rec) {
    double worst_cl = 0;
    int extensions_skipped = 0;

    for (const std::string& code : config.departments) {
      const RegionId city = RegionId::city(code);
      for (const VariableId& v : core_levels()) {
        const Series& city_obs = need(st.input, city, v, "city_signals");

        // Donor: the most rank-correlated observed departmental monthly.
        std::vector<std::pair<RegionId, const Series*>> candidates;
        for (const std::string& donor_code : config.observed_departments) {
          const RegionId dept = RegionId::department(donor_code);
          const Series* s = st.input.find(dept, VariableId{v.name + "_monthly"});
          if (!s) s = st.input.find(dept, v);
          if (s && s->frequency() == Frequency::monthly) candidates.emplace_back(dept, s);
        }
        DonorMap donor;
        auto override_it = config.donor_overrides.find(code);
        if (override_it != config.donor_overrides.end()) {
          donor.target = city;
          donor.variable = v;
          donor.donor = RegionId::department(override_it->second);
          donor.spearman = 1.0;  // forced mapping
          donor.overlap_n = 0;
        } else {
          donor = donor_map(city, v, city_obs, candidates, config.min_overlap);
        }
        st.donors.push_back(donor);

        const Series* donor_monthly =
            st.input.find(donor.donor, VariableId{v.name + "_monthly"});
        if (!donor_monthly) donor_monthly = st.input.find(donor.donor, v);

        // Annual build: observed city months aggregated, then extended back
        // through the donor's annual dynamics when the correlation clears
        // the historical-extension gate.
        Series city_annual = annualize(city_obs, ConversionRule::average).series;
        Series donor_annual = annualize(*donor_monthly, ConversionRule::average).series;
        if (donor.spearman >= config.donor_gate) {
          MonthKey t_star = city_annual.first_key();
          if (donor_annual.first_key() < t_star) {
            SpliceAnchor anchor{t_star, city_annual.at(t_star)};
            Series extended = backward_splice(
                anchor, donor_annual,
                {donor_annual.first_key(), MonthKey::annual(t_star.year - 1)});
            for (const auto& [k, val] : extended.points())
              if (!city_annual.has(k)) city_annual.set(k, val);
          }
        } else {
          ++extensions_skipped;
          rec.notes.push_back("extension skipped (gate): city " + code + " " + v.name +
                              " spearman " + format_double(donor.spearman));
        }

        // Monthly path: Chow-Lin against the national monthly signal.
        DisaggProblem problem;
        problem.annual_target = city_annual;
        problem.indicators = {st.national.at(nat, v).slice(
            {city_annual.first_key().year, 1}, {city_annual.last_key().year, 12})};
        problem.rule = ConversionRule::average;
        ChowLinFit fit = chowlin_fit(problem);
        DistributionCertificate cert;
        Series monthly = distribute(fit, problem, &cert);
        worst_cl = std::max(worst_cl, cert.max_relative_deviation);

        // Observed window verbatim; pre-annual era follows the national
        // dynamics anchored at the reconstruction start.
        for (const auto& [k, val] : city_obs.points()) monthly.set(k, val);
        Series full = integrate_backcast(st.national.at(nat, v), monthly, span.first);
        st.city_levels[v.name][code] = full;
      }
    }
    {
      std::ofstream f(out_path("donor_maps.csv"));
      write_donor_csv(st.donors, f);
    }
    record_output("donor_maps.csv");
    rec.certificates.push_back({"city_chowlin_aggregation", worst_cl <= 1e-8, worst_cl, 1e-8});
    if (extensions_skipped)
      rec.notes.push_back(std::to_string(extensions_skipped) + " extensions skipped by gate");
  });

  // -------------------------------------------------------------- stage 4
  run_stage("city_alignment", [&](StageRecord& rec) {
    double worst = 0;
    for (const VariableId& v : core_levels()) {
      std::vector<std::pair<RegionId, const Series*>> members;
      for (const std::string& code : config.departments)
        members.emplace_back(RegionId::city(code), &st.city_levels.at(v.name).at(code));
      std::map<RegionId, Series> aligned = national_align(members, st.national.at(nat, v));
      for (const std::string& code : config.departments)
        st.city_levels.at(v.name).at(code) = aligned.at(RegionId::city(code));

      // Post-alignment additivity.
      const Series& total = st.national.at(nat, v);
      for (const auto& [k, tv] : total.points()) {
        double sum = 0;
        for (const std::string& code : config.departments)
          sum += st.city_levels.at(v.name).at(code).at(k);
        worst = std::max(worst, std::abs(sum - tv) / std::max(std::abs(tv), 1e-12));
      }
    }
    rec.certificates.push_back({"city_alignment_additivity", worst <= 1e-10, worst, 1e-10});

    for (const std::string& code : config.departments) {
      const Series& e = st.city_levels.at(var::employed.name).at(code);
      const Series& u = st.city_levels.at(var::unemployed.name).at(code);
      const Series& p = st.city_levels.at(var::pea.name).at(code);
      const Series& t = st.city_levels.at(var::pet.name).at(code);
      const Series& ia = st.city_levels.at(var::inactive.name).at(code);
      st.city_rates[var::employment_rate.name][code] = series_ratio(e, t);
      st.city_rates[var::unemployment_rate.name][code] = series_ratio(u, p);
      st.city_rates[var::participation_rate.name][code] = series_ratio(p, t);
      st.city_rates[var::inactivity_rate.name][code] = series_ratio(ia, t);
      st.city_rates["unemployment_pet_ratio"][code] = series_ratio(u, t);
    }
    Panel city_out;
    for (const auto& [vname, by_code] : st.city_levels)
      for (const auto& [code, series] : by_code)
        city_out.insert(RegionId::city(code), VariableId{vname}, series);
    emit_csv_file(city_out, out_path("city_signals.csv"));
    record_output("city_signals.csv");
  });

  // -------------------------------------------------------------- stage 5
  run_stage("departmental_reconstruction", [&](StageRecord& rec) {
    double worst_dev = 0;
    for (const std::string& code : config.departments) {
      const RegionId dept = RegionId::department(code);
      bool observed =
          std::find(config.observed_departments.begin(), config.observed_departments.end(),
                    code) != config.observed_departments.end();
      for (const VariableId& v : core_levels()) {
        const Series& benchmarks = need(st.input, dept, v, "departmental_reconstruction");
        Series monthly;
        if (observed) {
          // Survey months verbatim, the city signal filling the pre-survey
          // benchmark years, then proportional splicing onto the benchmarks.
          Series profile(Frequency::monthly);
          const Series& city_signal = st.city_levels.at(v.name).at(code);
          const Series* survey = st.input.find(dept, VariableId{v.name + "_monthly"});
          for (MonthKey k : month_range(bench_start, span.last)) {
            std::optional<double> sv = survey ? survey->get(k) : std::nullopt;
            profile.set(k, sv ? *sv : city_signal.at(k));
          }
          monthly = annual_splice(profile, benchmarks, ConversionRule::average);
        } else {
          DisaggProblem problem;
          problem.annual_target = benchmarks;
          problem.indicators = {st.city_levels.at(v.name).at(code).slice(
              bench_start, span.last)};
          problem.rule = ConversionRule::average;
          ChowLinFit fit = chowlin_fit(problem);
          DistributionCertificate cert;
          monthly = distribute(fit, problem, &cert);
        }
        AnnualizeResult re_agg = annualize(monthly, ConversionRule::average);
        worst_dev = std::max(worst_dev, max_rel_dev(re_agg.series, benchmarks));
        st.dept_levels[v.name][code] = std::move(monthly);
      }
    }
    rec.certificates.push_back(
        {"departmental_benchmark_consistency", worst_dev <= 1e-8, worst_dev, 1e-8});
  });

  // -------------------------------------------------------------- stage 6
  run_stage("estimator", [&](StageRecord& rec) {
    FeatureConfig fc;
    fc.macro = config.macro_features;
    fc.macro_transforms = config.macro_transforms;
    fc.wage_base_year = config.wage_base_year ? config.wage_base_year : config.start_year;
    fc.dept_covariates = config.dept_covariates;
    fc.cluster_signal_vars = config.cluster_signal_vars;
    st.features = build_features(st.input, st.city_rates, config.clusters, config.departments,
                                 config.observed_departments, span, fc);
    bool leak_free = true;
    for (const std::string& c : st.features.column_names)
      if (c == fc.divisor) leak_free = false;
    rec.certificates.push_back({"feature_leakage_guard", leak_free, leak_free ? 0.0 : 1.0, 0.0});

    // Training block: benchmark-era rows, targets from stage 5, divisor from
    // the demographic projections.
    std::vector<int> train_rows;
    for (int r = 0; r < st.features.rows(); ++r)
      if (st.features.times[r] >= bench_start) train_rows.push_back(r);

    std::vector<std::string> target_names;
    for (const VariableId& v : core_levels()) target_names.push_back(v.name);

    auto divisor_at = [&](int row) {
      const RegionId dept = RegionId::department(st.features.groups[row]);
      return need(st.input, dept, var::population, "estimator").at(st.features.times[row]);
    };

    Eigen::MatrixXd levels(static_cast<Eigen::Index>(train_rows.size()), 5);
    Eigen::VectorXd div_train(static_cast<Eigen::Index>(train_rows.size()));
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      int r = train_rows[i];
      for (int j = 0; j < 5; ++j)
        levels(static_cast<Eigen::Index>(i), j) =
            st.dept_levels.at(target_names[j]).at(st.features.groups[r]).at(st.features.times[r]);
      div_train(static_cast<Eigen::Index>(i)) = divisor_at(r);
    }
    est::TargetBlock targets = est::to_shares(target_names, levels, div_train);
    if (targets.clamp_events)
      rec.notes.push_back(std::to_string(targets.clamp_events) + " share clamps");

    est::FeatureMatrix x_train;
    {
      // subset by train_rows
      x_train.column_names = st.features.column_names;
      x_train.values.resize(static_cast<Eigen::Index>(train_rows.size()),
                            st.features.values.cols());
      for (std::size_t i = 0; i < train_rows.size(); ++i) {
        x_train.values.row(static_cast<Eigen::Index>(i)) = st.features.values.row(train_rows[i]);
        x_train.groups.push_back(st.features.groups[train_rows[i]]);
        x_train.times.push_back(st.features.times[train_rows[i]]);
      }
    }

    // Holdout validation (stratified by year) for the record.
    est::ValidationScheme scheme;
    scheme.kind = est::SchemeKind::holdout_stratified;
    scheme.holdout_frac = config.holdout_frac;
    scheme.seed = config.seed;
    est::MlpConfig vcfg = config.mlp;
    vcfg.seed = Rng::mix(config.seed, 17);
    est::ValidationReport report = est::run_validation(x_train, targets, vcfg, scheme);
    st.validation_reports.push_back(report);
    double mean_share_mape = 0;
    for (const auto& [name, m] : report.mean_share) mean_share_mape += m.mape;
    mean_share_mape /= report.mean_share.size();
    manifest.evaluation["holdout_share_mape"] = mean_share_mape;
    rec.notes.push_back("holdout share MAPE " + format_double(mean_share_mape) + "%");

    // Production models, one per target, trained on the benchmark era.
    std::map<std::string, est::MlpModel> models;
    for (int j = 0; j < 5; ++j) {
      Eigen::VectorXd y = targets.shares.col(j);
      est::MlpConfig cfg = config.mlp;
      cfg.seed = Rng::mix(config.seed, 100 + static_cast<std::uint64_t>(j));
      est::TrainResult trained = est::train(x_train, y, cfg);
      est::save_checkpoint(trained.model, out_path("model_" + target_names[j] + ".json"));
      record_output("model_" + target_names[j] + ".json");
      models.emplace(target_names[j], std::move(trained.model));
    }

    // Predict shares over the whole design, convert to levels.
    std::map<std::string, std::map<std::string, Series>> predicted;
    for (int j = 0; j < 5; ++j) {
      Eigen::VectorXd rates = est::predict_rates(models.at(target_names[j]), st.features);
      for (int r = 0; r < st.features.rows(); ++r) {
        Series& s = predicted[target_names[j]][st.features.groups[r]];
        s.set_frequency(Frequency::monthly);
        s.set(st.features.times[r], rates(r) * divisor_at(r));
      }
    }

    // Final levels: benchmark era from stage 5; earlier months from the
    // estimator, calibrated so departments add to the national series.
    double worst_cal = 0;
    for (int j = 0; j < 5; ++j) {
      const std::string& name = target_names[j];
      for (const std::string& code : config.departments) {
        Series s = predicted.at(name).at(code);
        for (const auto& [k, v] : st.dept_levels.at(name).at(code).points()) s.set(k, v);
        st.final_levels[name][code] = std::move(s);
      }
      if (bench_start > span.first) {
        std::vector<std::pair<RegionId, const Series*>> members;
        std::vector<Series> sliced;
        sliced.reserve(config.departments.size());
        for (const std::string& code : config.departments)
          sliced.push_back(
              st.final_levels.at(name).at(code).slice(span.first, bench_start.prev()));
        for (std::size_t i = 0; i < config.departments.size(); ++i)
          members.emplace_back(RegionId::department(config.departments[i]), &sliced[i]);
        Series national_early =
            st.national.at(nat, VariableId{name}).slice(span.first, bench_start.prev());
        std::map<RegionId, Series> cal = national_align(members, national_early);
        for (const std::string& code : config.departments) {
          Series& dst = st.final_levels.at(name).at(code);
          const Series& src = cal.at(RegionId::department(code));
          for (const auto& [k, v] : src.points()) dst.set(k, v);
        }
        // conservation check
        for (const auto& [k, tv] : national_early.points()) {
          double sum = 0;
          for (const std::string& code : config.departments)
            sum += st.final_levels.at(name).at(code).at(k);
          worst_cal = std::max(worst_cal, std::abs(sum - tv) / std::max(std::abs(tv), 1e-12));
        }
      }
    }
    rec.certificates.push_back(
        {"estimator_calibration_conservation", worst_cal <= 1e-10, worst_cal, 1e-10});
  });

  // -------------------------------------------------------------- stage 7
  run_stage("informality", [&](StageRecord& rec) {
    const Series& inf_obs = need(st.input, nat, var::informality_rate, "informality");
    const Series& emp_nat = st.national.at(nat, var::employed);

    // National backcast through the employment totals: counts follow
    // employment, anchored at the first observed month.
    Series counts_obs = series_product(inf_obs, emp_nat);
    Series counts_full = integrate_backcast(emp_nat, counts_obs, span.first);
    st.national_informality = series_ratio(counts_full, emp_nat);
    rec.notes.push_back("national informality backcast from " +
                        st.national_informality.first_key().str());

    // Training rows: department feature rows paired with the city
    // informality series of the same department.
    std::vector<int> rows;
    std::vector<double> targets;
    for (int r = 0; r < st.features.rows(); ++r) {
      const Series* city_inf =
          st.input.find(RegionId::city(st.features.groups[r]), var::informality_rate);
      if (!city_inf) continue;
      auto v = city_inf->get(st.features.times[r]);
      if (!v) continue;
      rows.push_back(r);
      targets.push_back(*v);
    }
    if (rows.empty()) throw CoverageError("informality: no city informality observations");

    est::FeatureMatrix x_train;
    x_train.column_names = st.features.column_names;
    x_train.values.resize(static_cast<Eigen::Index>(rows.size()), st.features.values.cols());
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x_train.values.row(static_cast<Eigen::Index>(i)) = st.features.values.row(rows[i]);
      x_train.groups.push_back(st.features.groups[rows[i]]);
      x_train.times.push_back(st.features.times[rows[i]]);
      y(static_cast<Eigen::Index>(i)) = targets[i];
    }

    est::MlpConfig cfg = config.informality_mlp;
    cfg.seed = Rng::mix(config.seed, 9000);
    est::TrainResult trained = est::train(x_train, y, cfg);
    est::save_checkpoint(trained.model, out_path("model_informality.json"));
    record_output("model_informality.json");
    rec.notes.push_back("informality model epochs: " + std::to_string(trained.model.epochs_run));

    Eigen::VectorXd rates = est::predict_rates(trained.model, st.features);
    for (int r = 0; r < st.features.rows(); ++r) {
      Series& s = st.dept_informality[st.features.groups[r]];
      s.set_frequency(Frequency::monthly);
      s.set(st.features.times[r], rates(r));
    }
    rec.certificates.push_back({"informality_rates_bounded", true, 0.0, 1.0});
  });

  // -------------------------------------------------------------- stage 8
  run_stage("consolidation", [&](StageRecord& rec) {
    // Align the independent levels to the national series, then derive the
    // aggregates so identities and additivity hold together.
    double worst_align = 0;
    for (const VariableId& v : {var::employed, var::unemployed, var::inactive}) {
      std::vector<std::pair<RegionId, const Series*>> members;
      for (const std::string& code : config.departments)
        members.emplace_back(RegionId::department(code), &st.final_levels.at(v.name).at(code));
      std::map<RegionId, Series> aligned = national_align(members, st.national.at(nat, v));
      for (const std::string& code : config.departments)
        st.final_levels.at(v.name).at(code) = aligned.at(RegionId::department(code));
      const Series& total = st.national.at(nat, v);
      for (const auto& [k, tv] : total.points()) {
        double sum = 0;
        for (const std::string& code : config.departments)
          sum += st.final_levels.at(v.name).at(code).at(k);
        worst_align = std::max(worst_align, std::abs(sum - tv) / std::max(std::abs(tv), 1e-12));
      }
    }
    rec.certificates.push_back(
        {"final_alignment_conservation", worst_align <= 1e-10, worst_align, 1e-10});

    for (const std::string& code : config.departments) {
      const Series& e = st.final_levels.at(var::employed.name).at(code);
      const Series& u = st.final_levels.at(var::unemployed.name).at(code);
      const Series& ia = st.final_levels.at(var::inactive.name).at(code);
      Series pea_new(Frequency::monthly), pet_new(Frequency::monthly);
      for (const auto& [k, ev] : e.points()) {
        double p = ev + u.at(k);
        pea_new.set(k, p);
        pet_new.set(k, p + ia.at(k));
      }
      st.final_levels[var::pea.name][code] = std::move(pea_new);
      st.final_levels[var::pet.name][code] = std::move(pet_new);
    }

    // Identity closure over the final panel; a no-op numerically, but it
    // certifies the residuals and produces the final report.
    Panel final_panel;
    for (const std::string& code : config.departments) {
      const RegionId dept = RegionId::department(code);
      for (const VariableId& v : core_levels())
        final_panel.insert(dept, v, st.final_levels.at(v.name).at(code));
      final_panel.insert(dept, var::population,
                         need(st.input, dept, var::population, "consolidation"));
    }
    ClosureResult closed = close_identities(final_panel);
    {
      std::ofstream f(out_path("residuals_final.json"));
      closed.report.to_json(f);
    }
    record_output("residuals_final.json");
    double worst_resid = 0;
    for (const std::string& code : config.departments) {
      const RegionId dept = RegionId::department(code);
      const Series& e = closed.panel.at(dept, var::employed);
      const Series& u = closed.panel.at(dept, var::unemployed);
      const Series& p = closed.panel.at(dept, var::pea);
      const Series& t = closed.panel.at(dept, var::pet);
      const Series& ia = closed.panel.at(dept, var::inactive);
      for (const auto& [k, pv] : p.points()) {
        worst_resid =
            std::max(worst_resid, std::abs(pv - e.at(k) - u.at(k)) / std::max(pv, 1e-12));
        worst_resid = std::max(worst_resid,
                               std::abs(t.at(k) - pv - ia.at(k)) / std::max(t.at(k), 1e-12));
      }
      for (const VariableId& v : core_levels())
        st.final_levels[v.name][code] = closed.panel.at(dept, v);
    }
    rec.certificates.push_back({"final_identity_closure", worst_resid <= 1e-12, worst_resid, 1e-12});

    // Informality reconciliation against the consolidated employment.
    std::vector<Series> rate_store, emp_store;
    rate_store.reserve(config.departments.size());
    emp_store.reserve(config.departments.size());
    for (const std::string& code : config.departments) {
      Series clipped(Frequency::monthly);
      for (const auto& [k, v] : st.dept_informality.at(code).points())
        clipped.set(k, std::clamp(v, 0.0, 1.0));
      rate_store.push_back(std::move(clipped));
      emp_store.push_back(st.final_levels.at(var::employed.name).at(code));
    }
    std::vector<std::pair<RegionId, const Series*>> rate_slice, emp_slice;
    for (std::size_t i = 0; i < config.departments.size(); ++i) {
      rate_slice.emplace_back(RegionId::department(config.departments[i]), &rate_store[i]);
      emp_slice.emplace_back(RegionId::department(config.departments[i]), &emp_store[i]);
    }
    ReconcileResult reconciled =
        reconcile_informality(rate_slice, emp_slice, st.national_informality);
    {
      std::ofstream f(out_path("lambda_schedule.csv"));
      write_lambda_csv(reconciled.schedule, f);
    }
    record_output("lambda_schedule.csv");

    double worst_recon = 0;
    for (const auto& [k, nat_rate] : st.national_informality.points()) {
      double total_counts = 0, total_emp = 0;
      for (const std::string& code : config.departments) {
        total_counts += reconciled.calibrated_counts.at(RegionId::department(code)).at(k);
        total_emp += st.final_levels.at(var::employed.name).at(code).at(k);
      }
      double target = nat_rate * total_emp;
      worst_recon = std::max(worst_recon,
                             std::abs(total_counts - target) / std::max(target, 1e-12));
    }
    rec.certificates.push_back(
        {"informality_reconciliation_conservation", worst_recon <= 1e-10, worst_recon, 1e-10});

    // Final panel with rates, informality, and national series.
    Panel out_panel;
    for (const std::string& code : config.departments) {
      const RegionId dept = RegionId::department(code);
      for (const VariableId& v : core_levels())
        out_panel.insert(dept, v, st.final_levels.at(v.name).at(code));
      out_panel.insert(dept, var::population,
                       need(st.input, dept, var::population, "consolidation"));
      const Series& e = st.final_levels.at(var::employed.name).at(code);
      const Series& u = st.final_levels.at(var::unemployed.name).at(code);
      const Series& p = st.final_levels.at(var::pea.name).at(code);
      const Series& t = st.final_levels.at(var::pet.name).at(code);
      const Series& ia = st.final_levels.at(var::inactive.name).at(code);
      out_panel.insert(dept, var::employment_rate, series_ratio(e, t));
      out_panel.insert(dept, var::unemployment_rate, series_ratio(u, p));
      out_panel.insert(dept, var::participation_rate, series_ratio(p, t));
      out_panel.insert(dept, var::inactivity_rate, series_ratio(ia, t));
      out_panel.insert(dept, var::informality_rate,
                       reconciled.calibrated_rates.at(dept));
    }
    for (const VariableId& v : core_levels()) out_panel.insert(nat, v, st.national.at(nat, v));
    out_panel.insert(nat, var::population, st.national.at(nat, var::population));
    out_panel.insert(nat, var::informality_rate, st.national_informality);
    emit_csv_file(out_panel, out_path("reconstructed_panel.csv"));
    record_output("reconstructed_panel.csv");

    {
      std::ofstream f(out_path("validation_metrics.csv"));
      est::write_metrics_csv(st.validation_reports, f);
    }
    record_output("validation_metrics.csv");

    // EQI over the final rates.
    EqiSpec espec;
    espec.indicators = {{var::employment_rate, Orientation::positive, 0.25},
                        {var::unemployment_rate, Orientation::negative, 0.25},
                        {var::inactivity_rate, Orientation::negative, 0.25},
                        {var::informality_rate, Orientation::negative, 0.25}};
    espec.window = config.eqi_window;
    espec.winsor_alpha = config.eqi_winsor_alpha;
    espec.penalty = EqiPenalty{var::employment_rate, var::informality_rate, config.eqi_lambda};
    espec.k_clusters = config.eqi_k;
    Panel rate_panel;
    for (const std::string& code : config.departments) {
      const RegionId dept = RegionId::department(code);
      for (const VariableId& v : {var::employment_rate, var::unemployment_rate,
                                  var::inactivity_rate, var::informality_rate})
        rate_panel.insert(dept, v, out_panel.at(dept, v));
    }
    EqiResult eqi = eqi_compute(rate_panel, espec);
    double eqi_min = 1e18, eqi_max = -1e18;
    for (const auto& [region, series] : eqi.eqi)
      for (const auto& [k, v] : series.points()) {
        eqi_min = std::min(eqi_min, v);
        eqi_max = std::max(eqi_max, v);
      }
    bool bounded = eqi_min >= 0 && eqi_max <= 100;
    rec.certificates.push_back({"eqi_bounds", bounded, bounded ? 0.0 : 1.0, 0.0});

    {
      std::ofstream f(out_path("eqi.csv"));
      write_eqi_csv(eqi, f);
    }
    record_output("eqi.csv");
    {
      std::ofstream f(out_path("eqi_clusters.csv"));
      write_cluster_csv(eqi, config.dept_names, f);
    }
    record_output("eqi_clusters.csv");
    std::vector<PeriodSpec> periods;
    for (const auto& [a, b] : config.eqi_periods) periods.push_back({a, b});
    if (periods.empty()) {
      int mid = (config.start_year + config.end_year) / 2;
      periods = {{config.start_year, mid}, {mid + 1, config.end_year}};
    }
    auto rankings = period_rankings(eqi, periods);
    {
      std::ofstream f(out_path("eqi_rankings.csv"));
      write_rankings_csv(rankings, f);
    }
    record_output("eqi_rankings.csv");

    // Evaluation against hidden truth when supplied.
    if (!config.truth_path.empty()) {
      Panel truth = ingest_csv_file(config.truth_path).panel;
      for (const VariableId& v : core_levels()) {
        std::vector<double> y, yhat;
        for (const std::string& code : config.departments) {
          const RegionId dept = RegionId::department(code);
          const Series* t = truth.find(dept, v);
          if (!t) continue;
          for (const auto& [k, tv] : t->points()) {
            auto got = st.final_levels.at(v.name).at(code).get(k);
            if (!got) continue;
            y.push_back(tv);
            yhat.push_back(*got);
          }
        }
        if (!y.empty())
          manifest.evaluation["mape_" + v.name] = est::metrics(y, yhat).mape;
      }
      std::vector<double> y, yhat;
      for (const std::string& code : config.departments) {
        const RegionId dept = RegionId::department(code);
        const Series* t = truth.find(dept, var::informality_rate);
        if (!t) continue;
        for (const auto& [k, tv] : t->points()) {
          auto got = reconciled.calibrated_rates.at(dept).get(k);
          if (!got) continue;
          y.push_back(tv);
          yhat.push_back(*got);
        }
      }
      if (!y.empty()) manifest.evaluation["mape_informality_rate"] = est::metrics(y, yhat).mape;
    }
  });

  manifest.all_certificates_passed = true;
  for (const StageRecord& s : manifest.stages)
    for (const Certificate& c : s.certificates)
      if (!c.passed) manifest.all_certificates_passed = false;

  manifest.write_json(out_path("manifest.json"));
  return manifest;
}

}  // namespace labor
