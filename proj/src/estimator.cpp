#include "labor/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "labor/csv.hpp"
#include "labor/errors.hpp"

namespace labor::est {

using json = nlohmann::json;

namespace {
constexpr double kLnEps = 1e-5;
}

// ---------------------------------------------------------------------------
// Containers

int FeatureMatrix::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < column_names.size(); ++i)
    if (column_names[i] == name) return static_cast<int>(i);
  return -1;
}

void FeatureMatrix::validate() const {
  if (static_cast<int>(column_names.size()) != cols())
    throw DomainError("feature matrix: column name count mismatch");
  if (static_cast<int>(groups.size()) != rows() || static_cast<int>(times.size()) != rows())
    throw DomainError("feature matrix: row label count mismatch");
  for (std::size_t i = 0; i < column_names.size(); ++i)
    for (std::size_t j = i + 1; j < column_names.size(); ++j)
      if (column_names[i] == column_names[j])
        throw DomainError("feature matrix: duplicate column '" + column_names[i] + "'");
  if (!values.allFinite()) throw DomainError("feature matrix: non-finite cell");
}

TargetBlock to_shares(const std::vector<std::string>& target_names, const Eigen::MatrixXd& levels,
                      const Eigen::VectorXd& divisor) {
  if (levels.rows() != divisor.size())
    throw DomainError("to_shares: levels/divisor row mismatch");
  if (static_cast<int>(target_names.size()) != levels.cols())
    throw DomainError("to_shares: target name count mismatch");
  TargetBlock block;
  block.target_names = target_names;
  block.divisor = divisor;
  block.shares.resize(levels.rows(), levels.cols());
  for (Eigen::Index i = 0; i < levels.rows(); ++i) {
    if (divisor(i) <= 0) throw DomainError("to_shares: divisor must be positive");
    for (Eigen::Index j = 0; j < levels.cols(); ++j) {
      double r = levels(i, j) / divisor(i);
      if (r < kShareClamp) {
        r = kShareClamp;
        ++block.clamp_events;
      } else if (r > 1 - kShareClamp) {
        r = 1 - kShareClamp;
        ++block.clamp_events;
      }
      block.shares(i, j) = r;
    }
  }
  return block;
}

Eigen::MatrixXd from_shares(const TargetBlock& shares) {
  return from_shares(shares.shares, shares.divisor);
}

Eigen::MatrixXd from_shares(const Eigen::MatrixXd& shares, const Eigen::VectorXd& divisor) {
  if (shares.rows() != divisor.size()) throw DomainError("from_shares: row mismatch");
  return shares.array().colwise() * divisor.array();
}

// ---------------------------------------------------------------------------
// Scalers

Scaler Scaler::fit(ScalerKind kind, const Eigen::MatrixXd& x, const std::vector<int>& train_rows) {
  if (train_rows.empty()) throw DomainError("scaler: no training rows");
  Scaler s;
  s.kind = kind;
  const Eigen::Index p = x.cols();
  s.offset.resize(p);
  s.scale.resize(p);
  std::vector<double> col(train_rows.size());
  for (Eigen::Index j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < train_rows.size(); ++i) col[i] = x(train_rows[i], j);
    double off = 0, sc = 1;
    switch (kind) {
      case ScalerKind::standardize: {
        double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
        double var = 0;
        for (double v : col) var += (v - mean) * (v - mean);
        var /= col.size();
        off = mean;
        sc = std::sqrt(var);
        break;
      }
      case ScalerKind::minmax: {
        auto [lo, hi] = std::minmax_element(col.begin(), col.end());
        off = *lo;
        sc = *hi - *lo;
        break;
      }
      case ScalerKind::robust: {
        std::vector<double> sorted = col;
        std::sort(sorted.begin(), sorted.end());
        auto q = [&](double pq) {
          double h = pq * (static_cast<double>(sorted.size()) - 1);
          std::size_t lo = static_cast<std::size_t>(h);
          if (lo + 1 >= sorted.size()) return sorted.back();
          return sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo]);
        };
        off = q(0.5);
        sc = q(0.75) - q(0.25);
        break;
      }
    }
    if (sc == 0 || !std::isfinite(sc)) sc = 1;
    s.offset(j) = off;
    s.scale(j) = sc;
  }
  return s;
}

Eigen::MatrixXd Scaler::transform(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - offset.transpose()).array().rowwise() / scale.transpose().array();
}

Eigen::MatrixXd Scaler::inverse(const Eigen::MatrixXd& x) const {
  return (x.array().rowwise() * scale.transpose().array()).rowwise() + offset.transpose().array();
}

// ---------------------------------------------------------------------------
// Losses

const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::huber_logit: return "huber_logit";
    case LossKind::mse_logit: return "mse_logit";
    case LossKind::beta_nll: return "beta_nll";
  }
  return "huber_logit";
}

std::optional<LossKind> loss_from_string(const std::string& s) {
  if (s == "huber_logit") return LossKind::huber_logit;
  if (s == "mse_logit") return LossKind::mse_logit;
  if (s == "beta_nll") return LossKind::beta_nll;
  return std::nullopt;
}

double logit(double y) {
  y = std::clamp(y, kShareClamp, 1 - kShareClamp);
  return std::log(y / (1 - y));
}

double inv_logit(double z) {
  double v;
  if (z >= 0) {
    double e = std::exp(-z);
    v = 1 / (1 + e);
  } else {
    double e = std::exp(z);
    v = e / (1 + e);
  }
  // Strictly interior even for saturating inputs.
  return std::clamp(v, 1e-15, 1 - 1e-15);
}

double huber_loss(double r, double delta) {
  if (delta <= 0) throw DomainError("huber_loss: delta must be positive");
  double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_grad(double r, double delta) {
  return std::clamp(r, -delta, delta);
}

double digamma(double x) {
  // Recurrence into the asymptotic region, then the standard expansion.
  double result = 0;
  while (x < 6) {
    result -= 1 / x;
    x += 1;
  }
  double inv = 1 / x, inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 / 240)));
  return result;
}

double beta_nll(double y, double mu, double phi) {
  if (phi <= 0) throw DomainError("beta_nll: phi must be positive");
  y = std::clamp(y, kShareClamp, 1 - kShareClamp);
  mu = std::clamp(mu, kShareClamp, 1 - kShareClamp);
  double a = mu * phi, b = (1 - mu) * phi;
  double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(phi);
  return -((a - 1) * std::log(y) + (b - 1) * std::log(1 - y)) + log_beta;
}

double beta_nll_dmu(double y, double mu, double phi) {
  y = std::clamp(y, kShareClamp, 1 - kShareClamp);
  mu = std::clamp(mu, kShareClamp, 1 - kShareClamp);
  double a = mu * phi, b = (1 - mu) * phi;
  return phi * (-std::log(y) + std::log(1 - y) + digamma(a) - digamma(b));
}

namespace {

double loss_value(double z, double y, LossKind kind, const MlpConfig& cfg) {
  switch (kind) {
    case LossKind::huber_logit: return huber_loss(z - logit(y), cfg.huber_delta);
    case LossKind::mse_logit: {
      double r = z - logit(y);
      return 0.5 * r * r;
    }
    case LossKind::beta_nll: return beta_nll(y, inv_logit(z), cfg.beta_phi);
  }
  return 0;
}

double loss_dz(double z, double y, LossKind kind, const MlpConfig& cfg) {
  switch (kind) {
    case LossKind::huber_logit: return huber_grad(z - logit(y), cfg.huber_delta);
    case LossKind::mse_logit: return z - logit(y);
    case LossKind::beta_nll: {
      double mu = inv_logit(z);
      double mu_c = std::clamp(mu, kShareClamp, 1 - kShareClamp);
      return beta_nll_dmu(y, mu_c, cfg.beta_phi) * mu * (1 - mu);
    }
  }
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// MLP

void MlpModel::init_parameters(int p, Rng& rng) {
  const int h = config.hidden_dim;
  auto fill_normal = [&rng](Eigen::MatrixXd& m, double scale) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.normal();
  };
  w_in.resize(h, p);
  fill_normal(w_in, std::sqrt(2.0 / std::max(1, p)));
  b_in = Eigen::VectorXd::Zero(h);
  blocks.assign(config.blocks, MlpBlock{});
  for (MlpBlock& blk : blocks) {
    blk.ln_gain = Eigen::VectorXd::Ones(h);
    blk.ln_bias = Eigen::VectorXd::Zero(h);
    blk.w.resize(h, h);
    fill_normal(blk.w, std::sqrt(2.0 / h));
    blk.b = Eigen::VectorXd::Zero(h);
  }
  w_out.resize(h);
  for (int i = 0; i < h; ++i) w_out(i) = rng.normal() * std::sqrt(1.0 / h);
  b_out = 0;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = static_cast<std::size_t>(w_in.size()) + b_in.size();
  for (const MlpBlock& blk : blocks)
    n += blk.ln_gain.size() + blk.ln_bias.size() + blk.w.size() + blk.b.size();
  return n + w_out.size() + 1;
}

namespace {

template <typename BlockT>
void pack(const Eigen::MatrixXd& w_in, const Eigen::VectorXd& b_in,
          const std::vector<BlockT>& blocks, const Eigen::VectorXd& w_out, double b_out,
          Eigen::VectorXd& flat) {
  std::vector<double> buf;
  auto push_mat = [&buf](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) buf.push_back(m(i, j));
  };
  auto push_vec = [&buf](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) buf.push_back(v(i));
  };
  push_mat(w_in);
  push_vec(b_in);
  for (const BlockT& blk : blocks) {
    push_vec(blk.ln_gain);
    push_vec(blk.ln_bias);
    push_mat(blk.w);
    push_vec(blk.b);
  }
  push_vec(w_out);
  buf.push_back(b_out);
  flat = Eigen::Map<Eigen::VectorXd>(buf.data(), static_cast<Eigen::Index>(buf.size()));
}

}  // namespace

void MlpModel::to_flat(Eigen::VectorXd& out) const { pack(w_in, b_in, blocks, w_out, b_out, out); }
void MlpGradients::to_flat(Eigen::VectorXd& out) const { pack(w_in, b_in, blocks, w_out, b_out, out); }

void MlpModel::from_flat(const Eigen::VectorXd& in) {
  Eigen::Index pos = 0;
  auto pull_mat = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = in(pos++);
  };
  auto pull_vec = [&](Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = in(pos++);
  };
  pull_mat(w_in);
  pull_vec(b_in);
  for (MlpBlock& blk : blocks) {
    pull_vec(blk.ln_gain);
    pull_vec(blk.ln_bias);
    pull_mat(blk.w);
    pull_vec(blk.b);
  }
  pull_vec(w_out);
  b_out = in(pos++);
}

namespace {

struct ForwardCache {
  Eigen::MatrixXd h_in;                  // after input projection
  std::vector<Eigen::MatrixXd> h_block;  // input h to each block
  std::vector<Eigen::MatrixXd> xhat;     // normalized pre-gain
  std::vector<Eigen::VectorXd> inv_std;  // per row
  std::vector<Eigen::MatrixXd> a_drop;   // post-dropout pre-ReLU
  Eigen::MatrixXd h_final;
  Eigen::VectorXd z;
};

void forward_pass(const MlpModel& model, const Eigen::MatrixXd& x_scaled, ForwardMode mode,
                  const std::vector<Eigen::MatrixXd>* masks, ForwardCache& cache) {
  const Eigen::Index batch = x_scaled.rows();
  const int h = model.config.hidden_dim;
  const bool use_dropout =
      mode == ForwardMode::train && model.config.dropout > 0 && masks != nullptr;

  cache.h_in = (x_scaled * model.w_in.transpose()).rowwise() + model.b_in.transpose();
  Eigen::MatrixXd hcur = cache.h_in;

  cache.h_block.clear();
  cache.xhat.clear();
  cache.inv_std.clear();
  cache.a_drop.clear();

  for (std::size_t k = 0; k < model.blocks.size(); ++k) {
    const MlpBlock& blk = model.blocks[k];
    cache.h_block.push_back(hcur);

    Eigen::MatrixXd xhat(batch, h);
    Eigen::VectorXd inv_std(batch);
    for (Eigen::Index i = 0; i < batch; ++i) {
      double mean = hcur.row(i).mean();
      double var = (hcur.row(i).array() - mean).square().mean();
      double istd = 1.0 / std::sqrt(var + kLnEps);
      inv_std(i) = istd;
      xhat.row(i) = (hcur.row(i).array() - mean) * istd;
    }
    cache.xhat.push_back(xhat);
    cache.inv_std.push_back(inv_std);

    Eigen::MatrixXd u =
        (xhat.array().rowwise() * blk.ln_gain.transpose().array()).rowwise() +
        blk.ln_bias.transpose().array();
    Eigen::MatrixXd a = (u * blk.w.transpose()).rowwise() + blk.b.transpose();
    if (use_dropout) a = a.cwiseProduct((*masks)[k]);
    cache.a_drop.push_back(a);
    Eigen::MatrixXd v = a.cwiseMax(0.0);

    hcur = model.config.residual ? (hcur + v).eval() : v;
  }
  cache.h_final = hcur;
  cache.z = (hcur * model.w_out).array() + model.b_out;
}

}  // namespace

Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::MatrixXd& x_scaled,
                            ForwardMode mode, const std::vector<Eigen::MatrixXd>* masks) {
  if (x_scaled.cols() != model.w_in.cols())
    throw SchemaError("mlp_forward: input width does not match the model signature");
  ForwardCache cache;
  forward_pass(model, x_scaled, mode, masks, cache);
  return cache.z;
}

std::vector<Eigen::MatrixXd> sample_dropout_masks(const MlpModel& model, int batch, Rng& rng) {
  std::vector<Eigen::MatrixXd> masks;
  const double p = model.config.dropout;
  const int h = model.config.hidden_dim;
  // Inverted dropout: kept units scale by 1/(1-p) at train time.
  for (int k = 0; k < model.config.blocks; ++k) {
    Eigen::MatrixXd m(batch, h);
    for (int i = 0; i < batch; ++i)
      for (int j = 0; j < h; ++j) m(i, j) = rng.uniform() < p ? 0.0 : 1.0 / (1 - p);
    masks.push_back(std::move(m));
  }
  return masks;
}

double mlp_batch_loss(const MlpModel& model, const Eigen::MatrixXd& x_scaled,
                      const Eigen::VectorXd& target_shares, LossKind loss,
                      const MlpConfig& config, ForwardMode mode,
                      const std::vector<Eigen::MatrixXd>* masks) {
  Eigen::VectorXd z = mlp_forward(model, x_scaled, mode, masks);
  double total = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    total += loss_value(z(i), target_shares(i), loss, config);
  return total / static_cast<double>(z.size());
}

MlpGradients mlp_backward(const MlpModel& model, const Eigen::MatrixXd& x_scaled,
                          const Eigen::VectorXd& target_shares, LossKind loss,
                          const MlpConfig& config, const std::vector<Eigen::MatrixXd>* masks,
                          double* loss_out) {
  const Eigen::Index batch = x_scaled.rows();
  const bool use_dropout = config.dropout > 0 && masks != nullptr;

  ForwardCache cache;
  forward_pass(model, x_scaled, use_dropout ? ForwardMode::train : ForwardMode::eval, masks,
               cache);

  double total = 0;
  Eigen::VectorXd dz(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    total += loss_value(cache.z(i), target_shares(i), loss, config);
    dz(i) = loss_dz(cache.z(i), target_shares(i), loss, config) / static_cast<double>(batch);
  }
  if (loss_out) *loss_out = total / static_cast<double>(batch);

  MlpGradients g;
  g.w_out = cache.h_final.transpose() * dz;
  g.b_out = dz.sum();
  Eigen::MatrixXd dh = dz * model.w_out.transpose();

  g.blocks.assign(model.blocks.size(), MlpBlock{});
  for (int k = static_cast<int>(model.blocks.size()) - 1; k >= 0; --k) {
    const MlpBlock& blk = model.blocks[k];
    MlpBlock& gb = g.blocks[k];

    // v = ReLU(a_drop); block output = h_in + v (residual) or v.
    Eigen::MatrixXd dv = dh;
    Eigen::MatrixXd dad =
        dv.cwiseProduct((cache.a_drop[k].array() > 0.0).cast<double>().matrix());
    Eigen::MatrixXd da = use_dropout ? dad.cwiseProduct((*masks)[k]).eval() : dad;

    // a = u W^T + b
    Eigen::MatrixXd u =
        (cache.xhat[k].array().rowwise() * blk.ln_gain.transpose().array()).rowwise() +
        blk.ln_bias.transpose().array();
    gb.w = da.transpose() * u;
    gb.b = da.colwise().sum();
    Eigen::MatrixXd du = da * blk.w;

    // u = xhat .* gain + bias
    gb.ln_gain = du.cwiseProduct(cache.xhat[k]).colwise().sum();
    gb.ln_bias = du.colwise().sum();
    Eigen::MatrixXd dxhat = du.array().rowwise() * blk.ln_gain.transpose().array();

    // LayerNorm backward with biased variance.
    Eigen::MatrixXd dh_ln(batch, dxhat.cols());
    for (Eigen::Index i = 0; i < batch; ++i) {
      double m1 = dxhat.row(i).mean();
      double m2 = dxhat.row(i).cwiseProduct(cache.xhat[k].row(i)).mean();
      dh_ln.row(i) =
          (dxhat.row(i).array() - m1 - cache.xhat[k].row(i).array() * m2) * cache.inv_std[k](i);
    }
    dh = model.config.residual ? (dh + dh_ln).eval() : dh_ln;
  }

  g.w_in = dh.transpose() * x_scaled;
  g.b_in = dh.colwise().sum();
  return g;
}

// ---------------------------------------------------------------------------
// Adam

void AdamState::init(Eigen::Index n) {
  m = Eigen::VectorXd::Zero(n);
  v = Eigen::VectorXd::Zero(n);
  step = 0;
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               double lr, double weight_decay) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw DomainError("adam_step: shape mismatch");
  ++state.step;
  state.m = state.beta1 * state.m + (1 - state.beta1) * grad;
  state.v = state.beta2 * state.v.array().matrix() +
            (1 - state.beta2) * grad.cwiseProduct(grad);
  double bc1 = 1 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1 - std::pow(state.beta2, static_cast<double>(state.step));
  Eigen::ArrayXd mhat = state.m.array() / bc1;
  Eigen::ArrayXd vhat = state.v.array() / bc2;
  // Decoupled decay: applied to the parameters directly, not through the
  // moment estimates.
  params.array() -= lr * (mhat / (vhat.sqrt() + state.eps) + weight_decay * params.array());
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<MonthKey> distinct_sorted_times(const std::vector<MonthKey>& times,
                                            const std::vector<int>& rows) {
  std::vector<MonthKey> t;
  for (int r : rows) t.push_back(times[r]);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

void project_monotone(MlpModel& model) {
  if (model.config.monotone_features.empty()) return;
  for (const std::string& name : model.config.monotone_features) {
    int c = -1;
    for (std::size_t i = 0; i < model.input_columns.size(); ++i)
      if (model.input_columns[i] == name) c = static_cast<int>(i);
    if (c < 0) continue;
    model.w_in.col(c) = model.w_in.col(c).cwiseMax(0.0);
  }
  model.w_out = model.w_out.cwiseMax(0.0);
}

class TrainDivergence : public DivergenceError {
 public:
  TrainDivergence(const std::string& m, int epoch) : DivergenceError(m, epoch) {}
};

}  // namespace

TrainResult train(const FeatureMatrix& x, const Eigen::VectorXd& target_shares,
                  const MlpConfig& config) {
  x.validate();
  if (x.rows() != target_shares.size()) throw DomainError("train: target length mismatch");
  for (const std::string& name : config.monotone_features)
    if (x.column_index(name) < 0)
      throw SchemaError("train: monotone feature '" + name + "' not in the feature matrix");

  std::vector<int> all_rows(x.rows());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  std::vector<MonthKey> times = distinct_sorted_times(x.times, all_rows);
  if (times.size() < 2) throw DomainError("train: need >= 2 distinct time periods");

  // Temporal split: the latest ~20% of time points validate.
  int n_val_times = std::max<int>(1, static_cast<int>(std::floor(0.2 * times.size() + 0.5)));
  n_val_times = std::min<int>(n_val_times, static_cast<int>(times.size()) - 1);
  MonthKey cutoff = times[times.size() - n_val_times];
  std::vector<int> train_rows, val_rows;
  for (int r : all_rows)
    (x.times[r] >= cutoff ? val_rows : train_rows).push_back(r);
  if (train_rows.empty() || val_rows.empty())
    throw DomainError("train: degenerate temporal split");

  TrainResult result;
  MlpModel& model = result.model;
  model.config = config;
  model.input_columns = x.column_names;
  model.scaler = Scaler::fit(config.scaler, x.values, train_rows);

  Eigen::MatrixXd x_all = model.scaler.transform(x.values);
  auto subset = [&](const std::vector<int>& rows, Eigen::MatrixXd& xs, Eigen::VectorXd& ys) {
    xs.resize(static_cast<Eigen::Index>(rows.size()), x_all.cols());
    ys.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      xs.row(static_cast<Eigen::Index>(i)) = x_all.row(rows[i]);
      ys(static_cast<Eigen::Index>(i)) = target_shares(rows[i]);
    }
  };
  Eigen::MatrixXd x_val;
  Eigen::VectorXd y_val;
  subset(val_rows, x_val, y_val);

  Rng rng(config.seed);
  model.init_parameters(x.cols(), rng);
  project_monotone(model);

  Eigen::VectorXd params;
  model.to_flat(params);
  AdamState adam;
  adam.init(params.size());

  const int batch_size = std::min<int>(config.batch_cap, static_cast<int>(train_rows.size()));
  double best_val = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_params = params;
  int best_epoch = -1;
  int wait = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    double lr = config.lr;
    if (config.cosine_lr && config.max_epochs > 1) {
      double t = static_cast<double>(epoch) / (config.max_epochs - 1);
      double floor_lr = config.lr / 50.0;
      lr = floor_lr + (config.lr - floor_lr) * 0.5 * (1 + std::cos(M_PI * t));
    }
    rng.shuffle(train_rows);
    double epoch_loss = 0;
    int n_batches = 0;
    for (std::size_t start = 0; start < train_rows.size(); start += batch_size) {
      std::size_t end = std::min(train_rows.size(), start + batch_size);
      std::vector<int> batch_rows(train_rows.begin() + start, train_rows.begin() + end);
      Eigen::MatrixXd xb;
      Eigen::VectorXd yb;
      subset(batch_rows, xb, yb);

      std::vector<Eigen::MatrixXd> masks;
      const std::vector<Eigen::MatrixXd>* mask_ptr = nullptr;
      if (config.dropout > 0) {
        masks = sample_dropout_masks(model, static_cast<int>(xb.rows()), rng);
        mask_ptr = &masks;
      }
      double batch_loss = 0;
      MlpGradients grads =
          mlp_backward(model, xb, yb, config.loss, config, mask_ptr, &batch_loss);
      if (!std::isfinite(batch_loss)) {
        model.from_flat(best_params);
        model.epochs_run = epoch;
        model.best_validation_loss = best_val;
        throw TrainDivergence("train: non-finite loss at epoch " + std::to_string(epoch),
                              best_epoch);
      }
      epoch_loss += batch_loss;
      ++n_batches;

      Eigen::VectorXd gflat;
      grads.to_flat(gflat);
      model.to_flat(params);
      adam_step(adam, params, gflat, lr, config.weight_decay);
      model.from_flat(params);
      project_monotone(model);
    }

    double val_loss =
        mlp_batch_loss(model, x_val, y_val, config.loss, config, ForwardMode::eval);
    result.log.train_loss.push_back(epoch_loss / std::max(1, n_batches));
    result.log.validation_loss.push_back(val_loss);
    if (!std::isfinite(val_loss)) {
      model.from_flat(best_params);
      model.epochs_run = epoch + 1;
      model.best_validation_loss = best_val;
      throw TrainDivergence("train: non-finite validation loss", best_epoch);
    }

    if (val_loss < best_val - config.min_delta) {
      best_val = val_loss;
      model.to_flat(best_params);
      best_epoch = epoch;
      wait = 0;
    } else {
      ++wait;
    }
    if (wait >= config.patience) {
      result.log.stopped_early = true;
      model.epochs_run = epoch + 1;
      break;
    }
    model.epochs_run = epoch + 1;
  }

  if (best_epoch >= 0) model.from_flat(best_params);
  model.best_validation_loss = best_val;
  result.log.best_epoch = best_epoch;
  return result;
}

Eigen::VectorXd predict_rates(const MlpModel& model, const FeatureMatrix& x) {
  if (x.column_names != model.input_columns)
    throw SchemaError("predict_rates: feature columns do not match the model signature");
  Eigen::MatrixXd xs = model.scaler.transform(x.values);
  Eigen::VectorXd z = mlp_forward(model, xs, ForwardMode::eval);
  Eigen::VectorXd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = inv_logit(z(i));
  return out;
}

// ---------------------------------------------------------------------------
// Ridge baseline

RidgeModel train_ridge(const FeatureMatrix& x, const Eigen::VectorXd& target_shares,
                       const RidgeConfig& config) {
  x.validate();
  if (x.rows() != target_shares.size()) throw DomainError("train_ridge: target length mismatch");
  if (x.rows() < 2) throw DomainError("train_ridge: need >= 2 rows");

  RidgeModel model;
  model.input_columns = x.column_names;
  std::vector<int> all_rows(x.rows());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  model.scaler = Scaler::fit(config.scaler, x.values, all_rows);

  Eigen::MatrixXd xs = model.scaler.transform(x.values);
  Eigen::VectorXd z(x.rows());
  for (int i = 0; i < x.rows(); ++i) z(i) = logit(target_shares(i));

  // Centered normal equations keep the intercept unpenalized.
  Eigen::RowVectorXd x_mean = xs.colwise().mean();
  double z_mean = z.mean();
  Eigen::MatrixXd xc = xs.rowwise() - x_mean;
  Eigen::VectorXd zc = z.array() - z_mean;
  Eigen::MatrixXd normal = xc.transpose() * xc +
                           config.l2 * static_cast<double>(x.rows()) *
                               Eigen::MatrixXd::Identity(x.cols(), x.cols());
  model.coef = normal.ldlt().solve(xc.transpose() * zc);
  model.intercept = z_mean - x_mean * model.coef;
  return model;
}

Eigen::VectorXd predict_rates(const RidgeModel& model, const FeatureMatrix& x) {
  if (x.column_names != model.input_columns)
    throw SchemaError("predict_rates: feature columns do not match the ridge signature");
  Eigen::MatrixXd xs = model.scaler.transform(x.values);
  Eigen::VectorXd z = (xs * model.coef).array() + model.intercept;
  Eigen::VectorXd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = inv_logit(z(i));
  return out;
}

// ---------------------------------------------------------------------------
// Metrics and validation

Metrics metrics(const std::vector<double>& y, const std::vector<double>& yhat, double epsilon) {
  if (y.size() != yhat.size() || y.empty())
    throw DomainError("metrics: length mismatch or empty input");
  Metrics m;
  double se = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double e = y[i] - yhat[i];
    se += e * e;
    m.mae += std::abs(e);
    m.mape += std::abs(e) / std::max(std::abs(y[i]), epsilon);
  }
  m.rmse = std::sqrt(se / y.size());
  m.mae /= y.size();
  m.mape = 100.0 * m.mape / y.size();
  return m;
}

const char* to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::full_fit: return "full_fit";
    case SchemeKind::holdout_stratified: return "holdout_stratified";
    case SchemeKind::lko: return "lko";
    case SchemeKind::logo: return "logo";
    case SchemeKind::loyo: return "loyo";
  }
  return "full_fit";
}

namespace {

std::vector<std::vector<int>> make_folds(const FeatureMatrix& x, const ValidationScheme& scheme) {
  const int n = x.rows();
  std::vector<std::vector<int>> folds;

  std::vector<std::string> groups;
  for (const std::string& g : x.groups)
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  std::sort(groups.begin(), groups.end());

  std::vector<int> years;
  for (const MonthKey& t : x.times)
    if (std::find(years.begin(), years.end(), t.year) == years.end()) years.push_back(t.year);
  std::sort(years.begin(), years.end());

  switch (scheme.kind) {
    case SchemeKind::full_fit: {
      std::vector<int> all(n);
      std::iota(all.begin(), all.end(), 0);
      folds.push_back(all);
      break;
    }
    case SchemeKind::holdout_stratified: {
      Rng rng(scheme.seed);
      std::vector<int> test;
      for (int year : years) {
        std::vector<int> rows;
        for (int r = 0; r < n; ++r)
          if (x.times[r].year == year) rows.push_back(r);
        rng.shuffle(rows);
        int take = static_cast<int>(std::floor(scheme.holdout_frac * rows.size() + 0.5));
        for (int i = 0; i < take && i < static_cast<int>(rows.size()); ++i)
          test.push_back(rows[i]);
      }
      std::sort(test.begin(), test.end());
      folds.push_back(test);
      break;
    }
    case SchemeKind::lko: {
      if (scheme.k >= static_cast<int>(groups.size()))
        throw DomainError("lko: k must be smaller than the number of groups");
      Rng rng(scheme.seed);
      for (int it = 0; it < scheme.n_iter; ++it) {
        std::vector<std::string> pool = groups;
        rng.shuffle(pool);
        std::vector<std::string> chosen(pool.begin(), pool.begin() + scheme.k);
        std::vector<int> test;
        for (int r = 0; r < n; ++r)
          if (std::find(chosen.begin(), chosen.end(), x.groups[r]) != chosen.end())
            test.push_back(r);
        folds.push_back(std::move(test));
      }
      break;
    }
    case SchemeKind::logo: {
      for (const std::string& g : groups) {
        std::vector<int> test;
        for (int r = 0; r < n; ++r)
          if (x.groups[r] == g) test.push_back(r);
        folds.push_back(std::move(test));
      }
      break;
    }
    case SchemeKind::loyo: {
      for (int year : years) {
        std::vector<int> test;
        for (int r = 0; r < n; ++r)
          if (x.times[r].year == year) test.push_back(r);
        folds.push_back(std::move(test));
      }
      break;
    }
  }
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (folds[f].empty())
      throw FoldError("validation: fold " + std::to_string(f) + " has no test rows");
  return folds;
}

FeatureMatrix subset_features(const FeatureMatrix& x, const std::vector<int>& rows) {
  FeatureMatrix out;
  out.column_names = x.column_names;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), x.values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.values.row(static_cast<Eigen::Index>(i)) = x.values.row(rows[i]);
    out.groups.push_back(x.groups[rows[i]]);
    out.times.push_back(x.times[rows[i]]);
  }
  return out;
}

}  // namespace

ValidationReport run_validation(const FeatureMatrix& x, const TargetBlock& targets,
                                const MlpConfig& config, const ValidationScheme& scheme) {
  x.validate();
  if (x.rows() != targets.shares.rows())
    throw DomainError("run_validation: feature/target row mismatch");

  ValidationReport report;
  report.scheme = scheme;
  report.fold_test_rows = make_folds(x, scheme);
  const int n = x.rows();
  const int j_targets = static_cast<int>(targets.target_names.size());

  std::map<std::string, std::vector<Metrics>> share_acc, level_acc;

  for (std::size_t f = 0; f < report.fold_test_rows.size(); ++f) {
    const std::vector<int>& test = report.fold_test_rows[f];
    std::vector<int> train_rows;
    if (scheme.kind == SchemeKind::full_fit || scheme.kind == SchemeKind::holdout_stratified) {
      // full_fit trains on everything; holdout trains on the complement.
      for (int r = 0; r < n; ++r)
        if (scheme.kind == SchemeKind::full_fit ||
            !std::binary_search(test.begin(), test.end(), r))
          train_rows.push_back(r);
    } else {
      std::vector<bool> in_test(n, false);
      for (int r : test) in_test[r] = true;
      for (int r = 0; r < n; ++r)
        if (!in_test[r]) train_rows.push_back(r);
    }
    if (train_rows.empty()) throw FoldError("validation: fold has no training rows");

    FeatureMatrix x_train = subset_features(x, train_rows);
    FeatureMatrix x_test = subset_features(x, test);

    for (int j = 0; j < j_targets; ++j) {
      Eigen::VectorXd y_train(static_cast<Eigen::Index>(train_rows.size()));
      for (std::size_t i = 0; i < train_rows.size(); ++i)
        y_train(static_cast<Eigen::Index>(i)) = targets.shares(train_rows[i], j);

      MlpConfig fold_config = config;
      fold_config.seed = Rng::mix(config.seed, f * 1000003ULL + static_cast<std::uint64_t>(j));
      TrainResult trained = train(x_train, y_train, fold_config);

      Eigen::VectorXd rates = predict_rates(trained.model, x_test);
      std::vector<double> y_share, yhat_share, y_level, yhat_level;
      for (std::size_t i = 0; i < test.size(); ++i) {
        double share = targets.shares(test[i], j);
        double div = targets.divisor(test[i]);
        y_share.push_back(share);
        yhat_share.push_back(rates(static_cast<Eigen::Index>(i)));
        y_level.push_back(share * div);
        yhat_level.push_back(rates(static_cast<Eigen::Index>(i)) * div);
      }

      FoldMetrics fm;
      fm.fold = static_cast<int>(f);
      fm.target = targets.target_names[j];
      fm.share_scale = metrics(y_share, yhat_share);
      fm.level_scale = metrics(y_level, yhat_level);
      fm.test_rows = static_cast<int>(test.size());
      report.folds.push_back(fm);
      share_acc[fm.target].push_back(fm.share_scale);
      level_acc[fm.target].push_back(fm.level_scale);
    }
  }

  auto mean_of = [](const std::vector<Metrics>& ms) {
    Metrics m;
    for (const Metrics& x : ms) {
      m.rmse += x.rmse;
      m.mae += x.mae;
      m.mape += x.mape;
    }
    m.rmse /= ms.size();
    m.mae /= ms.size();
    m.mape /= ms.size();
    return m;
  };
  for (const auto& [name, ms] : share_acc) report.mean_share[name] = mean_of(ms);
  for (const auto& [name, ms] : level_acc) report.mean_level[name] = mean_of(ms);
  return report;
}

void write_metrics_csv(const std::vector<ValidationReport>& reports, std::ostream& out) {
  out << "scheme,fold,target,scale,rmse,mae,mape\n";
  for (const ValidationReport& rep : reports)
    for (const FoldMetrics& fm : rep.folds) {
      out << to_string(rep.scheme.kind) << ',' << fm.fold << ',' << fm.target << ",share,"
          << format_double(fm.share_scale.rmse) << ',' << format_double(fm.share_scale.mae)
          << ',' << format_double(fm.share_scale.mape) << '\n';
      out << to_string(rep.scheme.kind) << ',' << fm.fold << ',' << fm.target << ",level,"
          << format_double(fm.level_scale.rmse) << ',' << format_double(fm.level_scale.mae)
          << ',' << format_double(fm.level_scale.mape) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd mat_from_json(const json& rows) {
  if (rows.empty()) return {};
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  return m;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vec_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  return v;
}

const char* scaler_name(ScalerKind k) {
  switch (k) {
    case ScalerKind::standardize: return "standardize";
    case ScalerKind::minmax: return "minmax";
    case ScalerKind::robust: return "robust";
  }
  return "standardize";
}

ScalerKind scaler_from_name(const std::string& s) {
  if (s == "minmax") return ScalerKind::minmax;
  if (s == "robust") return ScalerKind::robust;
  return ScalerKind::standardize;
}

}  // namespace

void save_checkpoint(const MlpModel& model, const std::string& path) {
  json j;
  j["format"] = "labor-mlp-v1";
  j["config"] = {{"hidden_dim", model.config.hidden_dim},
                 {"blocks", model.config.blocks},
                 {"dropout", model.config.dropout},
                 {"residual", model.config.residual},
                 {"monotone_features", model.config.monotone_features},
                 {"loss", to_string(model.config.loss)},
                 {"huber_delta", model.config.huber_delta},
                 {"beta_phi", model.config.beta_phi},
                 {"lr", model.config.lr},
                 {"cosine_lr", model.config.cosine_lr},
                 {"weight_decay", model.config.weight_decay},
                 {"batch_cap", model.config.batch_cap},
                 {"patience", model.config.patience},
                 {"min_delta", model.config.min_delta},
                 {"max_epochs", model.config.max_epochs},
                 {"scaler", scaler_name(model.config.scaler)},
                 {"seed", model.config.seed}};
  j["input_columns"] = model.input_columns;
  j["scaler"] = {{"kind", scaler_name(model.scaler.kind)},
                 {"offset", vec_to_json(model.scaler.offset)},
                 {"scale", vec_to_json(model.scaler.scale)}};
  j["w_in"] = mat_to_json(model.w_in);
  j["b_in"] = vec_to_json(model.b_in);
  json blocks = json::array();
  for (const MlpBlock& blk : model.blocks)
    blocks.push_back({{"ln_gain", vec_to_json(blk.ln_gain)},
                      {"ln_bias", vec_to_json(blk.ln_bias)},
                      {"w", mat_to_json(blk.w)},
                      {"b", vec_to_json(blk.b)}});
  j["blocks"] = blocks;
  j["w_out"] = vec_to_json(model.w_out);
  j["b_out"] = model.b_out;
  j["epochs_run"] = model.epochs_run;
  j["best_validation_loss"] = model.best_validation_loss;

  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << j.dump(1) << '\n';
}

void save_checkpoint(const RidgeModel& model, const std::string& path) {
  json j;
  j["format"] = "labor-ridge-v1";
  j["input_columns"] = model.input_columns;
  j["scaler"] = {{"kind", scaler_name(model.scaler.kind)},
                 {"offset", vec_to_json(model.scaler.offset)},
                 {"scale", vec_to_json(model.scaler.scale)}};
  j["coef"] = vec_to_json(model.coef);
  j["intercept"] = model.intercept;
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << j.dump(1) << '\n';
}

RidgeModel load_ridge_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  json j;
  f >> j;
  if (j.value("format", "") != "labor-ridge-v1")
    throw SchemaError("checkpoint: not a ridge model: " + path);
  RidgeModel model;
  model.input_columns = j.at("input_columns").get<std::vector<std::string>>();
  model.scaler.kind = scaler_from_name(j.at("scaler").at("kind").get<std::string>());
  model.scaler.offset = vec_from_json(j.at("scaler").at("offset"));
  model.scaler.scale = vec_from_json(j.at("scaler").at("scale"));
  model.coef = vec_from_json(j.at("coef"));
  model.intercept = j.at("intercept").get<double>();
  return model;
}

std::string checkpoint_format(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  json j;
  f >> j;
  return j.value("format", "");
}

MlpModel load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  json j;
  f >> j;
  if (j.value("format", "") != "labor-mlp-v1")
    throw SchemaError("checkpoint: unknown format in " + path);

  MlpModel model;
  const json& c = j.at("config");
  model.config.hidden_dim = c.at("hidden_dim").get<int>();
  model.config.blocks = c.at("blocks").get<int>();
  model.config.dropout = c.at("dropout").get<double>();
  model.config.residual = c.at("residual").get<bool>();
  for (const auto& s : c.at("monotone_features"))
    model.config.monotone_features.insert(s.get<std::string>());
  model.config.loss = loss_from_string(c.at("loss").get<std::string>()).value();
  model.config.huber_delta = c.at("huber_delta").get<double>();
  model.config.beta_phi = c.at("beta_phi").get<double>();
  model.config.lr = c.at("lr").get<double>();
  model.config.cosine_lr = c.value("cosine_lr", true);
  model.config.weight_decay = c.at("weight_decay").get<double>();
  model.config.batch_cap = c.at("batch_cap").get<int>();
  model.config.patience = c.at("patience").get<int>();
  model.config.min_delta = c.at("min_delta").get<double>();
  model.config.max_epochs = c.at("max_epochs").get<int>();
  model.config.scaler = scaler_from_name(c.at("scaler").get<std::string>());
  model.config.seed = c.at("seed").get<std::uint64_t>();

  model.input_columns = j.at("input_columns").get<std::vector<std::string>>();
  model.scaler.kind = scaler_from_name(j.at("scaler").at("kind").get<std::string>());
  model.scaler.offset = vec_from_json(j.at("scaler").at("offset"));
  model.scaler.scale = vec_from_json(j.at("scaler").at("scale"));
  model.w_in = mat_from_json(j.at("w_in"));
  model.b_in = vec_from_json(j.at("b_in"));
  for (const auto& blk : j.at("blocks")) {
    MlpBlock b;
    b.ln_gain = vec_from_json(blk.at("ln_gain"));
    b.ln_bias = vec_from_json(blk.at("ln_bias"));
    b.w = mat_from_json(blk.at("w"));
    b.b = vec_from_json(blk.at("b"));
    model.blocks.push_back(std::move(b));
  }
  model.w_out = vec_from_json(j.at("w_out"));
  model.b_out = j.at("b_out").get<double>();
  model.epochs_run = j.value("epochs_run", 0);
  model.best_validation_loss = j.value("best_validation_loss", 0.0);
  return model;
}

}  // namespace labor::est
