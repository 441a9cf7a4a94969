// Command-line front end: each subcommand exposes one pipeline operation on
// CSV inputs; `pipeline` runs the whole reconstruction from a config file.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "labor/accounts.hpp"
#include "labor/csv.hpp"
#include "labor/eqi.hpp"
#include "labor/errors.hpp"
#include "labor/estimator.hpp"
#include "labor/pipeline.hpp"
#include "labor/splice.hpp"
#include "labor/synthetic.hpp"
#include "labor/tempdisagg.hpp"

using json = nlohmann::json;
using namespace labor;

namespace {

int g_log_level = 1;  // 0 quiet, 1 info, 2 debug

void log_info(const std::string& msg) {
  if (g_log_level >= 1) std::cerr << "[labor] " << msg << '\n';
}

RegionId parse_region(const std::string& code, const std::string& kind) {
  auto k = region_kind_from_string(kind);
  if (!k) throw SchemaError("unknown region kind '" + kind + "'");
  return RegionId{code, *k};
}

Series require_series(const Panel& panel, const RegionId& r, const std::string& var) {
  const Series* s = panel.find(r, VariableId{var});
  if (!s) throw CoverageError("input panel has no series " + r.str() + "/" + var);
  return *s;
}

// Feature rows for the standalone train/predict surface: one row per
// (region, month) where every feature is defined; national-kind variables
// broadcast across regions.
est::FeatureMatrix features_from_panel(const Panel& panel,
                                       const std::vector<std::string>& features,
                                       const std::vector<RegionId>& regions) {
  est::FeatureMatrix out;
  out.column_names = features;
  std::vector<std::vector<double>> rows;
  for (const RegionId& region : regions) {
    // Per-region month set = intersection of feature coverage.
    std::vector<const Series*> cols;
    for (const std::string& f : features) {
      const Series* s = panel.find(region, VariableId{f});
      if (!s) s = panel.find(RegionId::national(), VariableId{f});
      if (!s) throw CoverageError("feature '" + f + "' not found for " + region.str());
      cols.push_back(s);
    }
    if (cols.empty()) continue;
    for (const auto& [k, v0] : cols.front()->points()) {
      std::vector<double> row{v0};
      bool ok = true;
      for (std::size_t j = 1; j < cols.size(); ++j) {
        auto v = cols[j]->get(k);
        if (!v) {
          ok = false;
          break;
        }
        row.push_back(*v);
      }
      if (!ok) continue;
      rows.push_back(std::move(row));
      out.groups.push_back(region.code);
      out.times.push_back(k);
    }
  }
  out.values.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

std::vector<RegionId> department_list(const Panel& panel, std::vector<std::string> codes) {
  std::vector<RegionId> out;
  if (codes.empty()) {
    for (const RegionId& r : panel.regions())
      if (r.kind == RegionKind::department) out.push_back(r);
  } else {
    for (const std::string& c : codes) out.push_back(RegionId::department(c));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labor: benchmark-consistent reconstruction of regional labor panels"};
  app.require_subcommand(1);
  app.add_option("--log-level", g_log_level, "0=quiet, 1=info, 2=debug");

  std::string config_path, out_dir = "out";
  std::uint64_t seed = 42;
  app.add_option("--config", config_path, "configuration file (pipeline/eqi/train)");
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--seed", seed, "global random seed");

  // ingest ------------------------------------------------------------
  auto* cmd_ingest = app.add_subcommand("ingest", "parse a CSV and emit the canonical long form");
  std::string in_path, out_path = "panel.csv", rejects_path, format = "long";
  cmd_ingest->add_option("--input", in_path, "input CSV")->required();
  cmd_ingest->add_option("--output", out_path, "canonical long CSV to write");
  cmd_ingest->add_option("--rejects", rejects_path, "rejects report (JSON)");
  cmd_ingest->add_option("--format", format, "long|wide");

  // disagg ------------------------------------------------------------
  auto* cmd_disagg = app.add_subcommand("disagg", "temporal disaggregation of an annual series");
  std::string dg_region, dg_kind = "department", dg_var, dg_ind_region = "CO",
              dg_ind_kind = "national", dg_ind_var, dg_rule = "average", dg_method = "chowlin",
              dg_out = "distribution.csv";
  cmd_disagg->add_option("--input", in_path, "panel CSV")->required();
  cmd_disagg->add_option("--region", dg_region, "target region code")->required();
  cmd_disagg->add_option("--kind", dg_kind, "target region kind");
  cmd_disagg->add_option("--variable", dg_var, "annual target variable")->required();
  cmd_disagg->add_option("--indicator-variable", dg_ind_var, "monthly indicator variable")
      ->required();
  cmd_disagg->add_option("--indicator-region", dg_ind_region, "indicator region code");
  cmd_disagg->add_option("--indicator-kind", dg_ind_kind, "indicator region kind");
  cmd_disagg->add_option("--rule", dg_rule, "sum|average");
  cmd_disagg->add_option("--method", dg_method, "chowlin|denton");
  cmd_disagg->add_option("--output", dg_out, "monthly distribution CSV");

  // splice ------------------------------------------------------------
  auto* cmd_splice = app.add_subcommand("splice", "backward or annual proportional splicing");
  std::string sp_mode = "backward", sp_region, sp_kind = "department", sp_var, sp_proxy_region,
              sp_proxy_kind = "national", sp_proxy_var, sp_anchor, sp_from, sp_bench_var,
              sp_rule = "average", sp_out = "spliced.csv";
  cmd_splice->add_option("--input", in_path, "panel CSV")->required();
  cmd_splice->add_option("--mode", sp_mode, "backward|annual");
  cmd_splice->add_option("--region", sp_region, "target region code")->required();
  cmd_splice->add_option("--kind", sp_kind, "target region kind");
  cmd_splice->add_option("--variable", sp_var, "target variable")->required();
  cmd_splice->add_option("--proxy-region", sp_proxy_region, "proxy region (backward mode)");
  cmd_splice->add_option("--proxy-kind", sp_proxy_kind, "proxy region kind");
  cmd_splice->add_option("--proxy-variable", sp_proxy_var, "proxy variable (backward mode)");
  cmd_splice->add_option("--anchor", sp_anchor, "anchor month YYYY-MM (backward mode)");
  cmd_splice->add_option("--from", sp_from, "first month to reconstruct (backward mode)");
  cmd_splice->add_option("--benchmark-variable", sp_bench_var,
                         "annual benchmark variable (annual mode)");
  cmd_splice->add_option("--rule", sp_rule, "sum|average (annual mode)");
  cmd_splice->add_option("--output", sp_out, "output CSV");

  // align ---------------------------------------------------------------
  auto* cmd_align = app.add_subcommand("align", "proportional alignment to a national series");
  std::string al_var, al_national_var, al_out = "aligned.csv";
  std::vector<std::string> al_members;
  cmd_align->add_option("--input", in_path, "panel CSV")->required();
  cmd_align->add_option("--variable", al_var, "member variable")->required();
  cmd_align->add_option("--national-variable", al_national_var,
                        "national variable (defaults to --variable)");
  cmd_align->add_option("--members", al_members, "member department codes (default: all)");
  cmd_align->add_option("--output", al_out, "output CSV");

  // close ---------------------------------------------------------------
  auto* cmd_close = app.add_subcommand("close", "labor accounting identity closure");
  double close_tolerance = 1e-3;
  std::string close_out = "closed.csv", close_report = "residuals.json";
  cmd_close->add_option("--input", in_path, "panel CSV")->required();
  cmd_close->add_option("--tolerance", close_tolerance, "relative residual tolerance");
  cmd_close->add_option("--output", close_out, "closed panel CSV");
  cmd_close->add_option("--report", close_report, "residual report JSON");

  // train ---------------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "train a share-scale MLP from a panel");
  std::string tr_out = "model.json";
  cmd_train->add_option("--input", in_path, "panel CSV")->required();
  cmd_train->add_option("--output", tr_out, "model checkpoint JSON");

  // predict ---------------------------------------------------------------
  auto* cmd_predict = app.add_subcommand("predict", "predict rates from a trained model");
  std::string pr_model, pr_out = "rates.csv";
  std::vector<std::string> pr_regions;
  cmd_predict->add_option("--input", in_path, "panel CSV")->required();
  cmd_predict->add_option("--model", pr_model, "model checkpoint JSON")->required();
  cmd_predict->add_option("--regions", pr_regions, "department codes (default: all)");
  cmd_predict->add_option("--output", pr_out, "predicted rates CSV");

  // reconcile ---------------------------------------------------------------
  auto* cmd_reconcile =
      app.add_subcommand("reconcile", "reconcile informal counts with a national rate");
  std::string rc_rate_var = "informality_rate", rc_emp_var = "employed",
              rc_nat_var = "informality_rate", rc_out = "reconciled.csv",
              rc_lambda = "lambda_schedule.csv";
  std::vector<std::string> rc_regions;
  cmd_reconcile->add_option("--input", in_path, "panel CSV")->required();
  cmd_reconcile->add_option("--rate-variable", rc_rate_var, "departmental rate variable");
  cmd_reconcile->add_option("--employment-variable", rc_emp_var, "departmental employment");
  cmd_reconcile->add_option("--national-variable", rc_nat_var, "national rate variable");
  cmd_reconcile->add_option("--regions", rc_regions, "department codes (default: all)");
  cmd_reconcile->add_option("--output", rc_out, "calibrated rates CSV");
  cmd_reconcile->add_option("--lambda", rc_lambda, "lambda schedule CSV");

  // eqi ---------------------------------------------------------------
  auto* cmd_eqi = app.add_subcommand("eqi", "employment quality index from a rate panel");
  cmd_eqi->add_option("--input", in_path, "panel CSV")->required();

  // pipeline ---------------------------------------------------------------
  auto* cmd_pipeline = app.add_subcommand("pipeline", "run the full reconstruction");
  bool pipeline_strict = true;
  cmd_pipeline->add_flag("!--no-strict", pipeline_strict,
                         "do not fail on certificate violations");

  // synth ---------------------------------------------------------------
  auto* cmd_synth = app.add_subcommand("synth", "generate the synthetic fixture");
  int synth_regions = 6, synth_years = 10, synth_start = 2010;
  cmd_synth->add_option("--regions", synth_regions, "number of departments");
  cmd_synth->add_option("--years", synth_years, "number of years");
  cmd_synth->add_option("--start-year", synth_start, "first year");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_ingest) {
      SchemaSpec schema;
      schema.format = format == "wide" ? CsvFormat::wide_form : CsvFormat::long_form;
      IngestResult result = ingest_csv_file(in_path, schema);
      emit_csv_file(result.panel, out_path);
      log_info("ingested " + std::to_string(result.panel.size()) + " series, " +
               std::to_string(result.rejects.size()) + " rejects");
      if (!rejects_path.empty()) {
        json j = json::array();
        for (const RejectRow& r : result.rejects)
          j.push_back({{"line", r.line}, {"reason", r.reason}});
        std::ofstream f(rejects_path);
        f << j.dump(1) << '\n';
      }
    } else if (*cmd_disagg) {
      Panel panel = ingest_csv_file(in_path).panel;
      RegionId region = parse_region(dg_region, dg_kind);
      Series annual = require_series(panel, region, dg_var);
      Series indicator =
          require_series(panel, parse_region(dg_ind_region, dg_ind_kind), dg_ind_var);
      ConversionRule rule = dg_rule == "sum" ? ConversionRule::sum : ConversionRule::average;
      Series monthly;
      if (dg_method == "denton") {
        monthly = denton_pfd(annual, indicator, rule);
      } else {
        DisaggProblem problem;
        problem.annual_target = annual;
        problem.indicators = {indicator};
        problem.rule = rule;
        ChowLinFit fit = chowlin_fit(problem);
        DistributionCertificate cert;
        monthly = distribute(fit, problem, &cert);
        log_info("chowlin rho=" + format_double(fit.rho) +
                 " max_agg_dev=" + format_double(cert.max_relative_deviation));
      }
      Panel out;
      out.insert(region, VariableId{dg_var}, monthly);
      emit_csv_file(out, dg_out);
    } else if (*cmd_splice) {
      Panel panel = ingest_csv_file(in_path).panel;
      RegionId region = parse_region(sp_region, sp_kind);
      Series target = require_series(panel, region, sp_var);
      Series result;
      if (sp_mode == "annual") {
        Series benchmark = require_series(
            panel, region, sp_bench_var.empty() ? sp_var : sp_bench_var);
        result = annual_splice(
            target, benchmark, sp_rule == "sum" ? ConversionRule::sum : ConversionRule::average);
      } else {
        Series proxy =
            require_series(panel, parse_region(sp_proxy_region, sp_proxy_kind), sp_proxy_var);
        auto anchor_key = MonthKey::parse(sp_anchor);
        auto from_key = MonthKey::parse(sp_from);
        if (!anchor_key || !from_key)
          throw SchemaError("splice: --anchor/--from must be YYYY-MM");
        SpliceAnchor anchor{*anchor_key, target.at(*anchor_key)};
        result = backward_splice(anchor, proxy, {*from_key, anchor_key->prev()});
      }
      Panel out;
      out.insert(region, VariableId{sp_var}, result);
      emit_csv_file(out, sp_out);
    } else if (*cmd_align) {
      Panel panel = ingest_csv_file(in_path).panel;
      Series national = require_series(panel, RegionId::national(),
                                       al_national_var.empty() ? al_var : al_national_var);
      std::vector<RegionId> members = department_list(panel, al_members);
      std::vector<Series> stored;
      stored.reserve(members.size());
      for (const RegionId& m : members) stored.push_back(require_series(panel, m, al_var));
      std::vector<std::pair<RegionId, const Series*>> slice;
      for (std::size_t i = 0; i < members.size(); ++i)
        slice.emplace_back(members[i], &stored[i]);
      auto aligned = national_align(slice, national);
      Panel out;
      for (const auto& [r, s] : aligned) out.insert(r, VariableId{al_var}, s);
      emit_csv_file(out, al_out);
    } else if (*cmd_close) {
      Panel panel = ingest_csv_file(in_path).panel;
      ClosureResult result = close_identities(panel, close_tolerance);
      emit_csv_file(result.panel, close_out);
      std::ofstream f(close_report);
      result.report.to_json(f);
      log_info("max pre-closure residual " + format_double(result.report.max_abs_relative));
      if (!result.report.all_within_tolerance()) {
        log_info("pre-closure residuals exceed tolerance; see " + close_report);
      }
    } else if (*cmd_train) {
      if (config_path.empty()) throw SchemaError("train: --config is required");
      std::ifstream cf(config_path);
      if (!cf) throw IoError("cannot open '" + config_path + "'");
      json cj;
      cf >> cj;
      Panel panel = ingest_csv_file(in_path).panel;
      std::vector<std::string> features = cj.at("features").get<std::vector<std::string>>();
      std::string target = cj.at("target").get<std::string>();
      std::vector<RegionId> regions = department_list(
          panel, cj.value("regions", std::vector<std::string>{}));
      est::FeatureMatrix x = features_from_panel(panel, features, regions);

      Eigen::VectorXd y(x.rows());
      for (int r = 0; r < x.rows(); ++r) {
        const Series* s = panel.find(RegionId::department(x.groups[r]), VariableId{target});
        auto v = s ? s->get(x.times[r]) : std::nullopt;
        if (!v) throw CoverageError("train: target missing for " + x.groups[r] + " at " +
                                    x.times[r].str());
        y(r) = *v;
      }
      if (cj.value("kind", "mlp") == "ridge") {
        est::RidgeConfig rc;
        rc.l2 = cj.value("l2", 1e-3);
        est::RidgeModel model = est::train_ridge(x, y, rc);
        est::save_checkpoint(model, tr_out);
        log_info("ridge fit on " + std::to_string(x.rows()) + " rows");
      } else {
        est::MlpConfig mlp;
        if (cj.contains("mlp")) {
          const json& m = cj["mlp"];
          if (m.contains("hidden_dim")) mlp.hidden_dim = m["hidden_dim"].get<int>();
          if (m.contains("blocks")) mlp.blocks = m["blocks"].get<int>();
          if (m.contains("dropout")) mlp.dropout = m["dropout"].get<double>();
          if (m.contains("loss"))
            mlp.loss = est::loss_from_string(m["loss"].get<std::string>())
                           .value_or(est::LossKind::huber_logit);
          if (m.contains("lr")) mlp.lr = m["lr"].get<double>();
          if (m.contains("max_epochs")) mlp.max_epochs = m["max_epochs"].get<int>();
          if (m.contains("patience")) mlp.patience = m["patience"].get<int>();
          if (m.contains("monotone_features"))
            for (const auto& s : m["monotone_features"])
              mlp.monotone_features.insert(s.get<std::string>());
        }
        mlp.seed = seed;
        est::TrainResult trained = est::train(x, y, mlp);
        est::save_checkpoint(trained.model, tr_out);
        log_info("trained " + std::to_string(trained.model.epochs_run) + " epochs, best val " +
                 format_double(trained.model.best_validation_loss));
      }
    } else if (*cmd_predict) {
      Panel panel = ingest_csv_file(in_path).panel;
      std::vector<RegionId> regions = department_list(panel, pr_regions);
      Eigen::VectorXd rates;
      est::FeatureMatrix x;
      if (est::checkpoint_format(pr_model) == "labor-ridge-v1") {
        est::RidgeModel model = est::load_ridge_checkpoint(pr_model);
        x = features_from_panel(panel, model.input_columns, regions);
        rates = est::predict_rates(model, x);
      } else {
        est::MlpModel model = est::load_checkpoint(pr_model);
        x = features_from_panel(panel, model.input_columns, regions);
        rates = est::predict_rates(model, x);
      }
      std::ofstream f(pr_out);
      if (!f) throw IoError("cannot open '" + pr_out + "'");
      f << "region_code,date,rate\n";
      for (int r = 0; r < x.rows(); ++r)
        f << x.groups[r] << ',' << x.times[r].str() << ',' << format_double(rates(r)) << '\n';
    } else if (*cmd_reconcile) {
      Panel panel = ingest_csv_file(in_path).panel;
      Series national = require_series(panel, RegionId::national(), rc_nat_var);
      std::vector<RegionId> members = department_list(panel, rc_regions);
      std::vector<Series> rate_store, emp_store;
      for (const RegionId& m : members) {
        rate_store.push_back(require_series(panel, m, rc_rate_var));
        emp_store.push_back(require_series(panel, m, rc_emp_var));
      }
      std::vector<std::pair<RegionId, const Series*>> rates, employment;
      for (std::size_t i = 0; i < members.size(); ++i) {
        rates.emplace_back(members[i], &rate_store[i]);
        employment.emplace_back(members[i], &emp_store[i]);
      }
      ReconcileResult result = reconcile_informality(rates, employment, national);
      Panel out;
      for (const auto& [r, s] : result.calibrated_rates)
        out.insert(r, VariableId{rc_rate_var}, s);
      emit_csv_file(out, rc_out);
      std::ofstream f(rc_lambda);
      write_lambda_csv(result.schedule, f);
    } else if (*cmd_eqi) {
      if (config_path.empty()) throw SchemaError("eqi: --config is required");
      std::ifstream cf(config_path);
      if (!cf) throw IoError("cannot open '" + config_path + "'");
      json cj;
      cf >> cj;
      Panel panel = ingest_csv_file(in_path).panel;
      EqiSpec spec;
      spec.indicators.clear();
      for (const auto& ind : cj.at("indicators"))
        spec.indicators.push_back(
            {VariableId{ind.at("variable").get<std::string>()},
             ind.value("orientation", "positive") == "negative" ? Orientation::negative
                                                                : Orientation::positive,
             ind.value("weight", 1.0)});
      spec.window = cj.value("window", 13);
      spec.winsor_alpha = cj.value("winsor_alpha", 0.01);
      if (cj.value("rank_scope", "within_month") == std::string("global"))
        spec.rank_scope = RankScope::global;
      if (cj.contains("penalty"))
        spec.penalty = EqiPenalty{VariableId{cj["penalty"].at("a").get<std::string>()},
                                  VariableId{cj["penalty"].at("b").get<std::string>()},
                                  cj["penalty"].value("lambda", 0.0)};
      if (cj.contains("labels"))
        spec.labels = cj["labels"].get<std::vector<std::string>>();
      spec.k_clusters = cj.value("k_clusters", static_cast<int>(spec.labels.size()));
      EqiResult result = eqi_compute(panel, spec);
      std::filesystem::create_directories(out_dir);
      {
        std::ofstream f(out_dir + "/eqi.csv");
        write_eqi_csv(result, f);
      }
      {
        std::ofstream f(out_dir + "/eqi_clusters.csv");
        write_cluster_csv(result, {}, f);
      }
      if (cj.contains("periods")) {
        std::vector<PeriodSpec> periods;
        for (const auto& p : cj["periods"])
          periods.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
        auto rankings = period_rankings(result, periods);
        std::ofstream f(out_dir + "/eqi_rankings.csv");
        write_rankings_csv(rankings, f);
      }
    } else if (*cmd_pipeline) {
      if (config_path.empty()) throw SchemaError("pipeline: --config is required");
      PipelineConfig config = PipelineConfig::from_json_file(config_path);
      if (app.count("--out-dir")) config.out_dir = out_dir;
      if (app.count("--seed")) config.seed = seed;
      RunManifest manifest = run_pipeline(config);
      log_info("pipeline complete; manifest at " + config.out_dir + "/manifest.json");
      for (const auto& [k, v] : manifest.evaluation)
        log_info("  " + k + " = " + format_double(v));
      if (pipeline_strict && !manifest.all_certificates_passed) {
        std::cerr << "[labor] certificate failure; see manifest\n";
        return 2;
      }
    } else if (*cmd_synth) {
      SynthSpec spec;
      spec.n_regions = synth_regions;
      spec.n_years = synth_years;
      spec.start_year = synth_start;
      spec.seed = seed;
      SyntheticFixture fx = generate_synthetic_panel(spec);
      std::filesystem::create_directories(out_dir);
      std::string panel_path = out_dir + "/fixture_panel.csv";
      std::string truth_path = out_dir + "/fixture_truth.csv";
      emit_csv_file(fx.observed, panel_path);
      emit_csv_file(fx.truth, truth_path);
      PipelineConfig config =
          default_fixture_config(fx, panel_path, truth_path, out_dir + "/run");
      config.seed = seed;
      config.write_json(out_dir + "/fixture_config.json");
      log_info("fixture written under " + out_dir);
    }
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 1;
  } catch (const PipelineError& e) {
    std::cerr << "pipeline error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << e.kind() << " error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
