#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "labor/estimator.hpp"
#include "labor/features.hpp"
#include "labor/panel.hpp"
#include "labor/synthetic.hpp"

namespace labor {

inline constexpr const char* kToolVersion = "labor 0.1.0";

struct Certificate {
  std::string name;
  bool passed = false;
  double value = 0;      // measured quantity (max deviation, residual, ...)
  double threshold = 0;
};

struct StageRecord {
  std::string name;
  double duration_ms = 0;
  std::vector<Certificate> certificates;
  std::vector<std::string> notes;
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::map<std::string, std::string> input_digests;
  std::vector<StageRecord> stages;
  std::map<std::string, std::string> output_digests;
  std::map<std::string, double> evaluation;  // truth-comparison metrics when available
  bool all_certificates_passed = false;
  std::string error;  // set when a stage halted the run

  void write_json(const std::string& path) const;
};

// Halted stage carries its name for diagnostics and exit-code mapping.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& message)
      : Error("pipeline", "[stage " + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  std::string panel_path;
  std::string truth_path;  // optional; enables the evaluation block
  std::string out_dir = "out";
  std::uint64_t seed = 42;

  std::vector<std::string> departments;
  std::vector<std::string> observed_departments;
  std::map<std::string, std::vector<std::string>> clusters;
  std::map<std::string, std::string> dept_names;       // optional, for the cluster table
  std::map<std::string, std::string> donor_overrides;  // department -> donor code

  int start_year = 0;
  int end_year = 0;
  int benchmark_start_year = 0;      // departmental annual + national monthly era
  int dept_monthly_start_year = 0;   // departmental survey monthlies
  int city_monthly_start_year = 0;   // city monthlies
  int informality_start_year = 0;    // national + city informality

  std::vector<std::string> indicator_candidates = {"cpi", "trm", "ppi", "ipi", "deflated_wage"};
  int smooth_window = 13;
  bool smooth_unemployment = false;
  int stable_span_months = 36;  // trailing window for the participation rescale
  double donor_gate = 0.95;
  int min_overlap = 10;

  // Estimator design matrix. City signals carry the macro cycle already, so
  // raw macro columns default off; when enabled, trending indices should use
  // the yoy transform.
  std::vector<std::string> macro_features = {};
  std::map<std::string, std::string> macro_transforms = {{"cpi", "yoy"}, {"ppi", "yoy"}};
  std::vector<std::string> dept_covariates = {"urban_share"};
  std::vector<std::string> cluster_signal_vars = {"employment_rate", "unemployment_rate",
                                                  "participation_rate", "inactivity_rate",
                                                  "unemployment_pet_ratio"};
  int wage_base_year = 0;  // 0 = start_year

  est::MlpConfig mlp;              // core targets
  est::MlpConfig informality_mlp;  // informality rate model
  double holdout_frac = 0.2;

  double eqi_lambda = 0.5;
  int eqi_window = 13;
  double eqi_winsor_alpha = 0.01;
  int eqi_k = 5;
  std::vector<std::pair<int, int>> eqi_periods;  // default: halves of the span

  MonthSpan span() const { return {{start_year, 1}, {end_year, 12}}; }

  static PipelineConfig from_json_file(const std::string& path);
  void write_json(const std::string& path) const;
  // Pre-flight: referenced files exist, clusters cover every department and
  // contain at least one observed member, spans ordered.
  void validate() const;
};

// Executes the eight reconstruction stages and writes every product plus the
// run manifest under config.out_dir. Throws PipelineError on stage failure
// after writing the partial manifest.
RunManifest run_pipeline(const PipelineConfig& config);

// Fixture scaffolding used by the synth subcommand and the tests: writes
// fixture CSVs and a ready-to-run config next to them.
PipelineConfig default_fixture_config(const SyntheticFixture& fixture,
                                      const std::string& panel_path,
                                      const std::string& truth_path,
                                      const std::string& out_dir);

// FNV-1a 64-bit content digests, hex encoded.
std::string digest_file(const std::string& path);
std::string digest_bytes(const std::string& bytes);

}  // namespace labor
