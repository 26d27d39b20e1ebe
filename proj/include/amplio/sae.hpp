#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "amplio/error.hpp"
#include "amplio/vector.hpp"

namespace amplio {

/// Gated sparse autoencoder parameters.
///
/// Encoder: pi_gate = W_gate (x - b_dec) + b_gate,
///          pi_mag  = exp(r_mag) * W_gate (x - b_dec) + b_mag,
///          f       = 1[pi_gate > 0] * relu(pi_mag).
/// Decoder: x_hat = W_dec f + b_dec.
struct GatedSAEParams {
  Matrix w_gate;  // F x d
  Vector b_gate;  // F
  Vector r_mag;   // F
  Vector b_mag;   // F
  Matrix w_dec;   // d x F
  Vector b_dec;   // d

  Eigen::Index d() const { return w_dec.rows(); }
  Eigen::Index features() const { return w_dec.cols(); }

  static GatedSAEParams zeros(Eigen::Index d, Eigen::Index f) {
    return {Matrix::Zero(f, d), Vector::Zero(f), Vector::Zero(f), Vector::Zero(f), Matrix::Zero(d, f), Vector::Zero(d)};
  }

  void validate() const {
    const auto dd = d();
    const auto ff = features();
    if (ff < 1 || dd < 1) fail(ErrorCode::InvalidInput, "SAE needs d >= 1 and F >= 1");
    if (w_gate.rows() != ff || w_gate.cols() != dd || b_gate.size() != ff || r_mag.size() != ff ||
        b_mag.size() != ff || b_dec.size() != dd) {
      fail(ErrorCode::DimensionError, "inconsistent SAE parameter shapes");
    }
    if (!w_gate.allFinite() || !b_gate.allFinite() || !r_mag.allFinite() || !b_mag.allFinite() ||
        !w_dec.allFinite() || !b_dec.allFinite()) {
      fail(ErrorCode::InvalidInput, "SAE parameters contain non-finite entries");
    }
  }

  friend bool operator==(const GatedSAEParams& a, const GatedSAEParams& b) {
    return a.w_gate == b.w_gate && a.b_gate == b.b_gate && a.r_mag == b.r_mag && a.b_mag == b.b_mag &&
           a.w_dec == b.w_dec && a.b_dec == b.b_dec;
  }
};

/// Pre-activations of the gate and magnitude paths.
struct SAEPreActivations {
  Vector gate;
  Vector magnitude;
};

inline SAEPreActivations sae_preactivations(const GatedSAEParams& p, const Vector& x) {
  require_dim(x, p.d());
  const Vector z = p.w_gate * (x - p.b_dec);
  return {z + p.b_gate, p.r_mag.array().exp().matrix().cwiseProduct(z) + p.b_mag};
}

inline Vector sae_encode(const GatedSAEParams& p, const Vector& x) {
  const auto pre = sae_preactivations(p, x);
  Vector f(p.features());
  for (Eigen::Index j = 0; j < f.size(); ++j) {
    f[j] = pre.gate[j] > 0.0 ? std::max(pre.magnitude[j], 0.0) : 0.0;
  }
  return f;
}

inline Vector sae_decode(const GatedSAEParams& p, const Vector& f) {
  require_dim(f, p.features());
  return p.w_dec * f + p.b_dec;
}

/// Batched encode: columns of `x` are samples. Returns F x N activations.
inline Matrix sae_encode_batch(const GatedSAEParams& p, const Matrix& x) {
  if (x.rows() != p.d()) fail(ErrorCode::DimensionError, "batch rows must equal SAE input dimension");
  const Matrix z = p.w_gate * (x.colwise() - p.b_dec);
  const Vector scale = p.r_mag.array().exp().matrix();
  Matrix f(p.features(), x.cols());
  for (Eigen::Index n = 0; n < x.cols(); ++n) {
    for (Eigen::Index j = 0; j < f.rows(); ++j) {
      const double zz = z(j, n);
      f(j, n) = (zz + p.b_gate[j] > 0.0) ? std::max(scale[j] * zz + p.b_mag[j], 0.0) : 0.0;
    }
  }
  return f;
}

struct SAETrainConfig {
  int features = 10000;
  double sparsity_weight = 0.004;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 10;
  int batch_size = 256;
  /// Fraction of total steps over which the sparsity weight ramps up linearly.
  double warmup_fraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (features < 1) fail(ErrorCode::InvalidInput, "features must be >= 1");
    if (!(sparsity_weight > 0.0)) fail(ErrorCode::InvalidInput, "sparsity weight must be > 0");
    if (!(learning_rate > 0.0)) fail(ErrorCode::InvalidInput, "learning rate must be > 0");
    if (epochs < 1 || batch_size < 1) fail(ErrorCode::InvalidInput, "epochs and batch size must be >= 1");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0) fail(ErrorCode::InvalidInput, "warmup fraction must lie in [0, 1]");
  }
};

struct SAETrainReport {
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::vector<int> dead_features;  // never active on the training set after training
  double mean_l0 = 0.0;            // mean active features per sample after training
};

struct SAETrainResult {
  GatedSAEParams params;
  SAETrainReport report;
};

namespace detail {

struct AdamSlot {
  Matrix m, v;
  explicit AdamSlot(Eigen::Index r = 0, Eigen::Index c = 0) : m(Matrix::Zero(r, c)), v(Matrix::Zero(r, c)) {}
};

template <typename Param>
void adam_step(Param& param, const Param& grad, AdamSlot& slot, const SAETrainConfig& cfg, long step) {
  auto m = slot.m.reshaped();
  auto v = slot.v.reshaped();
  auto g = grad.reshaped();
  auto w = param.reshaped();
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  w -= (cfg.learning_rate * (m / c1).array() / ((v / c2).array().sqrt() + cfg.adam_eps)).matrix();
}

inline void normalize_columns(Matrix& w) {
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    const double n = w.col(j).norm();
    if (n > 0.0) w.col(j) /= n;
  }
}

struct LossGrad {
  double loss = 0.0;
  GatedSAEParams grad;  // same shapes as the parameters
};

/// Mean per-sample loss over the columns of `xb` and its gradient.
inline LossGrad sae_loss_grad(const GatedSAEParams& p, const Matrix& xb, double lambda) {
  const auto d = xb.rows();
  const auto bs = xb.cols();
  const Vector scale = p.r_mag.array().exp().matrix();

  const Matrix xc = xb.colwise() - p.b_dec;
  const Matrix z = p.w_gate * xc;
  const Matrix pre_gate = z.colwise() + p.b_gate;
  const Matrix pre_mag = (z.array().colwise() * scale.array()).matrix().colwise() + p.b_mag;
  const Eigen::ArrayXXd gate_open = (pre_gate.array() > 0.0).cast<double>();
  const Eigen::ArrayXXd mag_pos = (pre_mag.array() > 0.0).cast<double>();
  const Matrix f = (gate_open * pre_mag.array().max(0.0)).matrix();
  const Matrix f_aux = pre_gate.array().max(0.0).matrix();

  const Matrix e1 = ((p.w_dec * f).colwise() + p.b_dec) - xb;
  const Matrix e2 = ((p.w_dec * f_aux).colwise() + p.b_dec) - xb;

  const double inv_d = 1.0 / static_cast<double>(d);
  const double inv = 1.0 / static_cast<double>(bs);
  LossGrad out;
  out.loss = (inv_d * e1.colwise().squaredNorm().sum() + lambda * f_aux.sum() + inv_d * e2.colwise().squaredNorm().sum()) * inv;

  const Matrix g_xhat = 2.0 * inv * inv_d * e1;
  const Matrix g_xaux = 2.0 * inv * inv_d * e2;  // decoder frozen on this path

  auto& g = out.grad;
  g.w_dec = g_xhat * f.transpose();
  g.b_dec = g_xhat.rowwise().sum();

  const Matrix d_pre_mag = ((p.w_dec.transpose() * g_xhat).array() * gate_open * mag_pos).matrix();
  g.b_mag = d_pre_mag.rowwise().sum();
  g.r_mag = (d_pre_mag.cwiseProduct(z)).rowwise().sum().cwiseProduct(scale);
  Matrix d_z = (d_pre_mag.array().colwise() * scale.array()).matrix();

  const Matrix d_pre_gate = (((p.w_dec.transpose() * g_xaux).array() + lambda * inv) * gate_open).matrix();
  g.b_gate = d_pre_gate.rowwise().sum();
  d_z += d_pre_gate;

  g.w_gate = d_z * xc.transpose();
  g.b_dec -= p.w_gate.transpose() * d_z.rowwise().sum();
  return out;
}

}  // namespace detail

/// Seeded initialization: Kaiming-uniform gate weights, decoder = unit-normalized
/// transpose, decoder bias at the data mean.
inline GatedSAEParams sae_initialize(const Matrix& data, int features, std::uint64_t seed) {
  const auto d = data.rows();
  auto p = GatedSAEParams::zeros(d, features);
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(d));
  std::uniform_real_distribution<double> uni(-bound, bound);
  for (Eigen::Index j = 0; j < p.w_gate.rows(); ++j)
    for (Eigen::Index i = 0; i < d; ++i) p.w_gate(j, i) = uni(rng);
  p.w_dec = p.w_gate.transpose();
  detail::normalize_columns(p.w_dec);
  p.b_dec = data.rowwise().mean();
  return p;
}

using SAEProgress = std::function<void(double fraction)>;

/// Train a gated SAE on the columns of `data` (d x N) with Adam.
///
/// Per-sample loss: ||x - x_hat(f)||^2 / d + lambda * ||relu(pi_gate)||_1
///                  + ||x - x_hat_frozen(relu(pi_gate))||^2 / d
/// where the last term uses a stop-gradient copy of the decoder. Squared errors
/// are averaged over dimensions so lambda does not depend on d. Decoder
/// columns are kept at unit norm after every step.
inline SAETrainResult sae_train(const Matrix& data, const SAETrainConfig& cfg, const SAEProgress& progress = {}) {
  cfg.validate();
  if (data.cols() == 0 || data.rows() == 0) fail(ErrorCode::InvalidInput, "no embeddings to train on");
  if (!data.allFinite()) fail(ErrorCode::InvalidInput, "training data contains non-finite values");

  const auto d = data.rows();
  const auto n = data.cols();
  const auto F = static_cast<Eigen::Index>(cfg.features);
  SAETrainResult result{sae_initialize(data, cfg.features, cfg.seed), {}};
  auto& p = result.params;

  detail::AdamSlot s_wg(F, d), s_bg(F, 1), s_r(F, 1), s_bm(F, 1), s_wd(d, F), s_bd(d, 1);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const long batches_per_epoch = static_cast<long>((n + cfg.batch_size - 1) / cfg.batch_size);
  const long total_steps = batches_per_epoch * cfg.epochs;
  const double warmup_steps = std::max(1.0, cfg.warmup_fraction * static_cast<double>(total_steps));
  long step = 0;

  Matrix xb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (long b = 0; b < batches_per_epoch; ++b) {
      const auto begin = b * cfg.batch_size;
      const auto end = std::min<Eigen::Index>(n, begin + cfg.batch_size);
      const auto bs = end - begin;
      xb.resize(d, bs);
      for (Eigen::Index c = 0; c < bs; ++c) xb.col(c) = data.col(order[static_cast<std::size_t>(begin + c)]);

      ++step;
      const double lambda = cfg.sparsity_weight * std::min(1.0, static_cast<double>(step) / warmup_steps);
      const auto g = detail::sae_loss_grad(p, xb, lambda);
      if (!std::isfinite(g.loss)) {
        fail(ErrorCode::TrainingDiverged, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      loss_sum += g.loss * static_cast<double>(bs);

      detail::adam_step(p.w_gate, g.grad.w_gate, s_wg, cfg, step);
      detail::adam_step(p.b_gate, g.grad.b_gate, s_bg, cfg, step);
      detail::adam_step(p.r_mag, g.grad.r_mag, s_r, cfg, step);
      detail::adam_step(p.b_mag, g.grad.b_mag, s_bm, cfg, step);
      detail::adam_step(p.w_dec, g.grad.w_dec, s_wd, cfg, step);
      detail::adam_step(p.b_dec, g.grad.b_dec, s_bd, cfg, step);
      detail::normalize_columns(p.w_dec);

      if (progress) progress(static_cast<double>(step) / static_cast<double>(total_steps));
    }
    result.report.epoch_loss.push_back(loss_sum / static_cast<double>(n));
  }

  const Matrix acts = sae_encode_batch(p, data);
  long active = 0;
  for (Eigen::Index j = 0; j < F; ++j) {
    const auto fired = (acts.row(j).array() > 0.0).count();
    if (fired == 0) result.report.dead_features.push_back(static_cast<int>(j));
    active += fired;
  }
  result.report.mean_l0 = static_cast<double>(active) / static_cast<double>(n);
  return result;
}

inline SAETrainResult sae_train(const std::vector<Vector>& embeddings, const SAETrainConfig& cfg,
                                const SAEProgress& progress = {}) {
  if (embeddings.empty()) fail(ErrorCode::InvalidInput, "no embeddings to train on");
  Matrix data(embeddings.front().size(), static_cast<Eigen::Index>(embeddings.size()));
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    require_dim(embeddings[i], data.rows());
    data.col(static_cast<Eigen::Index>(i)) = embeddings[i];
  }
  return sae_train(data, cfg, progress);
}

}  // namespace amplio
