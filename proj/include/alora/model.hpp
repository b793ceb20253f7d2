#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "alora/attention.hpp"
#include "alora/data.hpp"
#include "alora/embedding.hpp"
#include "alora/linalg.hpp"

namespace alora {

enum class EmbeddingMode { pairwise, identity };

struct TrainConfig {
  std::size_t window = 20;
  std::size_t d_model = 512;
  std::size_t heads = 8;
  std::size_t layers = 3;
  double lambda_reg = 10.0;
  double learning_rate = 1e-4;
  std::size_t max_epochs = 10;
  std::size_t patience = 3;
  std::size_t k_pairs = 512;
  std::size_t rank_r = 1;
  std::uint64_t seed = 0;
  bool skip = true;
  Activation activation = Activation::identity;
  bool causal_mask = false;

  std::size_t batch_size = 64;
  std::size_t kernel_size = 3;
  double val_fraction = 0.1;
  EmbeddingMode embedding = EmbeddingMode::pairwise;
  CorrelationMethod correlation = CorrelationMethod::spearman;
  bool freeze_embedding = false;
  bool freeze_values = false;  // W_V of every head and W_proj
  bool freeze_output = false;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  LayerOptions layer_options() const;
};

struct ModelParams {
  EmbeddingKernels kernels;
  std::vector<AttentionLayerParams> layers;
  Matrix w_out;  // d_model x d
  PairSelection pairs;

  std::size_t input_dims() const noexcept { return w_out.cols(); }
  std::size_t d_model() const noexcept { return w_out.rows(); }
  void validate() const;
};

struct Thresholds {
  double h1 = 0.0;
  std::optional<double> h2;
};

struct AttentionTrace {
  std::vector<Matrix> s;           // head-averaged attention per layer
  std::vector<double> sigma_last;  // singular values of the last layer's matrix
};

struct ForwardResult {
  Matrix recon;
  AttentionTrace trace;
};

/// Fresh parameters: pair selection on `train`, pairwise or identity
/// embedding, uniformly initialised attention layers and output projection.
ModelParams init_model(const TimeSeriesFrame& train, const TrainConfig& cfg);

/// recon = Z^(L) W_out, where Z^(0) is the embedded window.
ForwardResult forward(const Matrix& window, const ModelParams& params, const TrainConfig& cfg);

struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  double regularization = 0.0;  // sum over windows and layers of the Geman penalty, unscaled
};

/// sum_w ||Y_w - Yhat_w||_F^2 + lambda_reg * sum_w sum_l L(S_w^(l)).
LossBreakdown total_loss(std::span<const Matrix> batch, const ModelParams& params,
                         const TrainConfig& cfg);

/// Loss of one window plus the gradient of that loss with respect to every
/// parameter (same layout as `params`). `last_sigma` receives the singular
/// values of the last layer's attention matrix when non-null.
LossBreakdown loss_and_gradient(const Matrix& window, const ModelParams& params,
                                const TrainConfig& cfg, ModelParams& grad,
                                std::vector<double>* last_sigma = nullptr);

/// Flattened parameter vector in module order: embedding taps (per channel,
/// first then second series), per layer per head W_Q, W_K, W_V then W_proj,
/// then W_out.
std::vector<double> pack_params(const ModelParams& params);
void unpack_params(std::span<const double> flat, ModelParams& params);
/// 1 where the parameter is updated by the optimiser under `cfg`.
std::vector<std::uint8_t> trainable_mask(const ModelParams& params, const TrainConfig& cfg);

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad,
            std::span<const std::uint8_t> mask);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_reconstruction = 0.0;  // mean per window
  double train_regularization = 0.0;  // mean per window, unscaled
  double val_loss = 0.0;              // mean total per window; 0 without a validation split
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> sigma4;  // final-epoch trajectories of the 4th/5th singular values
  std::vector<double> sigma5;
  bool stopped_early = false;
};

struct TrainResult {
  ModelParams params;
  Thresholds thresholds;  // h1 only
  TrainHistory history;
};

/// Adam on shuffled mini-batches with early stopping on the trailing
/// `val_fraction` of windows. h1 comes from the final epoch's sigma_4/sigma_5
/// trajectories of S^(L). Expects an already-normalised frame.
TrainResult train(const TimeSeriesFrame& train_frame, const TrainConfig& cfg);
TrainResult train(const TimeSeriesFrame& train_frame, const TrainConfig& cfg, ModelParams initial);

/// Maximum value seen on either trajectory (0 when both are empty).
double calibrate_h1(std::span<const double> sigma4, std::span<const double> sigma5);

/// Number of singular values strictly above h1.
std::size_t alora_t_score(std::span<const double> sigma, double h1);
std::size_t alora_t_score(const AttentionTrace& trace, double h1);

/// ||y - yhat||^2 * score.
double anomaly_score(std::span<const double> y, std::span<const double> recon, std::size_t score);

struct ScoreSeries {
  std::vector<double> as;
  std::vector<double> residual_sq;         // ||y_t - yhat_t||^2
  std::vector<std::size_t> alora_score;
  Matrix residuals;                        // N x d per-series squared errors
  std::size_t warmup = 0;                  // leading steps scored from the first window
  std::vector<std::uint8_t> alarms;        // filled by detect()
};

/// Scores step t from the window whose last row is t; the first T-1 steps
/// take their rows from the first window.
ScoreSeries score_series(const TimeSeriesFrame& frame, const ModelParams& params,
                         const TrainConfig& cfg, double h1);

/// score_series plus alarms AS > h2. Requires thresholds.h2.
ScoreSeries detect(const TimeSeriesFrame& frame, const ModelParams& params, const TrainConfig& cfg,
                   const Thresholds& thresholds);

}  // namespace alora
