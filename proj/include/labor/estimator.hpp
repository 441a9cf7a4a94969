#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "labor/month_key.hpp"
#include "labor/rng.hpp"

namespace labor::est {

using labor::MonthKey;

// ---------------------------------------------------------------------------
// Data containers

struct FeatureMatrix {
  std::vector<std::string> column_names;
  Eigen::MatrixXd values;           // n x p, no missing cells
  std::vector<std::string> groups;  // region code per row
  std::vector<MonthKey> times;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
  int column_index(const std::string& name) const;  // -1 when absent
  void validate() const;
};

// Bounded share targets r = y / N, clamped to [1e-6, 1 - 1e-6].
struct TargetBlock {
  std::vector<std::string> target_names;
  Eigen::MatrixXd shares;   // n x J
  Eigen::VectorXd divisor;  // n
  int clamp_events = 0;
};

constexpr double kShareClamp = 1e-6;

TargetBlock to_shares(const std::vector<std::string>& target_names, const Eigen::MatrixXd& levels,
                      const Eigen::VectorXd& divisor);
Eigen::MatrixXd from_shares(const TargetBlock& shares);
Eigen::MatrixXd from_shares(const Eigen::MatrixXd& shares, const Eigen::VectorXd& divisor);

// ---------------------------------------------------------------------------
// Scalers

enum class ScalerKind { standardize, minmax, robust };

struct Scaler {
  ScalerKind kind = ScalerKind::standardize;
  Eigen::VectorXd offset;  // per column
  Eigen::VectorXd scale;   // per column, never zero

  static Scaler fit(ScalerKind kind, const Eigen::MatrixXd& x,
                    const std::vector<int>& train_rows);
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& x) const;
};

// ---------------------------------------------------------------------------
// Losses

enum class LossKind { huber_logit, mse_logit, beta_nll };

const char* to_string(LossKind k);
std::optional<LossKind> loss_from_string(const std::string& s);

double logit(double y);       // clamps input to [1e-6, 1-1e-6] first
double inv_logit(double z);   // strictly inside (0,1)

// r^2/2 inside |r| <= delta, delta(|r| - delta/2) outside.
double huber_loss(double residual, double delta = 1.0);
double huber_grad(double residual, double delta = 1.0);

// Negative log density of Beta(mu*phi, (1-mu)*phi) at y.
double beta_nll(double y, double mu, double phi);
// d beta_nll / d mu.
double beta_nll_dmu(double y, double mu, double phi);
double digamma(double x);

// ---------------------------------------------------------------------------
// Residual MLP

struct MlpConfig {
  int hidden_dim = 64;
  int blocks = 2;
  double dropout = 0.2;
  bool residual = true;
  std::set<std::string> monotone_features;
  LossKind loss = LossKind::huber_logit;
  double huber_delta = 1.0;
  double beta_phi = 50.0;
  double lr = 1e-3;
  bool cosine_lr = true;  // decay to lr/50 over max_epochs
  double weight_decay = 1e-4;
  int batch_cap = 512;
  int patience = 20;
  double min_delta = 1e-4;
  int max_epochs = 500;
  ScalerKind scaler = ScalerKind::standardize;
  std::uint64_t seed = 0;
};

// One residual block: LayerNorm -> Linear -> Dropout -> ReLU, added back to
// the input when residual connections are on.
struct MlpBlock {
  Eigen::VectorXd ln_gain, ln_bias;
  Eigen::MatrixXd w;  // hidden x hidden
  Eigen::VectorXd b;
};

struct MlpModel {
  MlpConfig config;
  std::vector<std::string> input_columns;
  Scaler scaler;
  Eigen::MatrixXd w_in;  // hidden x p
  Eigen::VectorXd b_in;
  std::vector<MlpBlock> blocks;
  Eigen::VectorXd w_out;  // hidden
  double b_out = 0;
  int epochs_run = 0;
  double best_validation_loss = 0;

  void init_parameters(int p, Rng& rng);
  std::size_t parameter_count() const;
  // Flat views in a fixed order (w_in, b_in, blocks..., w_out, b_out).
  void to_flat(Eigen::VectorXd& out) const;
  void from_flat(const Eigen::VectorXd& in);
};

enum class ForwardMode { train, eval };

struct MlpGradients {
  Eigen::MatrixXd w_in;
  Eigen::VectorXd b_in;
  std::vector<MlpBlock> blocks;
  Eigen::VectorXd w_out;
  double b_out = 0;

  void to_flat(Eigen::VectorXd& out) const;
};

// Forward pass on already-scaled inputs. In train mode masks must be
// supplied (sample_dropout_masks); eval mode ignores them.
Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::MatrixXd& x_scaled,
                            ForwardMode mode,
                            const std::vector<Eigen::MatrixXd>* masks = nullptr);

std::vector<Eigen::MatrixXd> sample_dropout_masks(const MlpModel& model, int batch, Rng& rng);

// Mean-loss gradients over the batch, exact reverse mode.
MlpGradients mlp_backward(const MlpModel& model, const Eigen::MatrixXd& x_scaled,
                          const Eigen::VectorXd& target_shares, LossKind loss,
                          const MlpConfig& config,
                          const std::vector<Eigen::MatrixXd>* masks, double* loss_out = nullptr);

double mlp_batch_loss(const MlpModel& model, const Eigen::MatrixXd& x_scaled,
                      const Eigen::VectorXd& target_shares, LossKind loss,
                      const MlpConfig& config, ForwardMode mode,
                      const std::vector<Eigen::MatrixXd>* masks = nullptr);

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay

struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void init(Eigen::Index n);
};

// One bias-corrected update; weight decay is applied directly to the
// parameters, outside the moment estimates.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               double lr, double weight_decay);

// ---------------------------------------------------------------------------
// Training

struct TrainLog {
  std::vector<double> train_loss;       // per epoch
  std::vector<double> validation_loss;  // per epoch
  int best_epoch = -1;
  bool stopped_early = false;
};

struct TrainResult {
  MlpModel model;
  TrainLog log;
};

// Trains a single-target model. The latest ~20% of distinct time points are
// held out for validation; batches cap at min(batch_cap, n_train); early
// stopping restores the best-validation parameters. Fully deterministic
// under config.seed.
TrainResult train(const FeatureMatrix& x, const Eigen::VectorXd& target_shares,
                  const MlpConfig& config);

// Sigmoid of the eval-mode logits; outputs strictly inside (0,1).
Eigen::VectorXd predict_rates(const MlpModel& model, const FeatureMatrix& x);

// ---------------------------------------------------------------------------
// Linear ridge baseline: the second provided implementation of the estimator
// interface. Fits logit shares by penalized least squares in closed form.

struct RidgeConfig {
  double l2 = 1e-3;  // penalty on standardized coefficients
  ScalerKind scaler = ScalerKind::standardize;
};

struct RidgeModel {
  std::vector<std::string> input_columns;
  Scaler scaler;
  Eigen::VectorXd coef;
  double intercept = 0;
};

RidgeModel train_ridge(const FeatureMatrix& x, const Eigen::VectorXd& target_shares,
                       const RidgeConfig& config = {});
Eigen::VectorXd predict_rates(const RidgeModel& model, const FeatureMatrix& x);
void save_checkpoint(const RidgeModel& model, const std::string& path);
RidgeModel load_ridge_checkpoint(const std::string& path);
// "labor-mlp-v1" or "labor-ridge-v1" from a checkpoint file.
std::string checkpoint_format(const std::string& path);

// ---------------------------------------------------------------------------
// Metrics and validation schemes

struct Metrics {
  double rmse = 0, mae = 0, mape = 0;
};

Metrics metrics(const std::vector<double>& y, const std::vector<double>& yhat,
                double epsilon = 1e-8);

enum class SchemeKind { full_fit, holdout_stratified, lko, logo, loyo };

const char* to_string(SchemeKind k);

struct ValidationScheme {
  SchemeKind kind = SchemeKind::full_fit;
  double holdout_frac = 0.2;
  int k = 3;       // lko
  int n_iter = 20; // lko
  std::uint64_t seed = 0;
};

struct FoldMetrics {
  int fold = 0;
  std::string target;
  Metrics share_scale;
  Metrics level_scale;
  int test_rows = 0;
};

struct ValidationReport {
  ValidationScheme scheme;
  std::vector<FoldMetrics> folds;
  // Mean over folds, per target, share and level scale.
  std::map<std::string, Metrics> mean_share;
  std::map<std::string, Metrics> mean_level;
  std::vector<std::vector<int>> fold_test_rows;  // row indices per fold
};

// Trains one model per target on each fold's complement and evaluates on the
// fold, reporting share- and level-scale metrics.
ValidationReport run_validation(const FeatureMatrix& x, const TargetBlock& targets,
                                const MlpConfig& config, const ValidationScheme& scheme);

void write_metrics_csv(const std::vector<ValidationReport>& reports, std::ostream& out);

// Model checkpoint: JSON with config echo, parameter arrays in row-major
// order and the seed.
void save_checkpoint(const MlpModel& model, const std::string& path);
MlpModel load_checkpoint(const std::string& path);

}  // namespace labor::est
