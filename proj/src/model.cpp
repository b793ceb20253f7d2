#include "alora/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "alora/error.hpp"
#include "alora/rng.hpp"

namespace alora {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (window < 2) fail("window must be >= 2");
  if (d_model == 0) fail("d_model must be >= 1");
  if (heads == 0 || d_model % heads != 0) fail("heads must divide d_model");
  if (layers == 0) fail("layers must be >= 1");
  if (!(lambda_reg >= 0.0) || !std::isfinite(lambda_reg)) fail("lambda_reg must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (max_epochs == 0) fail("max_epochs must be >= 1");
  if (k_pairs == 0) fail("k_pairs must be >= 1");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (kernel_size == 0 || kernel_size % 2 == 0) fail("kernel_size must be odd");
  if (kernel_size > window) fail("kernel_size must not exceed window");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail("val_fraction must be in [0, 1)");
}

LayerOptions TrainConfig::layer_options() const {
  return LayerOptions{skip, activation, causal_mask ? AttentionMask::causal(window) : AttentionMask{}};
}

void ModelParams::validate() const {
  if (layers.empty()) throw ConfigError("model: at least one attention layer required");
  kernels.validate(input_dims());
  if (kernels.d_model() != d_model()) throw ConfigError("model: embedding width differs from W_out rows");
  for (const auto& layer : layers) {
    layer.validate();
    if (layer.d_model() != d_model()) throw ConfigError("model: layer width differs from d_model");
  }
}

ModelParams init_model(const TimeSeriesFrame& train, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t d = train.dims();
  ModelParams p;
  CounterRng embed_rng(cfg.seed, 1);
  if (cfg.embedding == EmbeddingMode::identity) {
    if (cfg.d_model != d) throw ConfigError("identity embedding requires d_model == number of series");
    p.kernels = make_identity_kernels(d, cfg.kernel_size);
  } else {
    p.pairs = select_pairs(train, cfg.k_pairs, cfg.correlation);
    p.kernels = make_pairwise_kernels(p.pairs, cfg.d_model, cfg.kernel_size, embed_rng);
  }
  CounterRng layer_rng(cfg.seed, 2);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    p.layers.push_back(make_attention_layer(cfg.d_model, cfg.heads, layer_rng, l));
  }
  CounterRng out_rng(cfg.seed, 3);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  p.w_out = Matrix(cfg.d_model, d);
  for (double& w : p.w_out.values()) w = out_rng.uniform(-bound, bound);
  return p;
}

namespace {

struct ForwardCache {
  Matrix embedded;
  std::vector<LayerForward> layers;
  Matrix recon;
};

void check_window(const Matrix& window, const ModelParams& params, const TrainConfig& cfg) {
  if (window.rows() != cfg.window || window.cols() != params.input_dims()) {
    throw ShapeError("forward: window is " + std::to_string(window.rows()) + "x" +
                     std::to_string(window.cols()) + ", model expects " + std::to_string(cfg.window) +
                     "x" + std::to_string(params.input_dims()));
  }
}

ForwardCache forward_cached(const Matrix& window, const ModelParams& params, const TrainConfig& cfg,
                            const LayerOptions& opts) {
  check_window(window, params, cfg);
  ForwardCache c;
  c.embedded = embed(window, params.kernels);
  const Matrix* z = &c.embedded;
  c.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    c.layers.push_back(layer_forward(*z, layer, opts));
    z = &c.layers.back().output;
  }
  c.recon = matmul(*z, params.w_out);
  return c;
}

double squared_error(const Matrix& a, const Matrix& b) {
  double acc = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
  return acc;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto& ch : z.kernels.channels) {
    std::fill(ch.w_first.begin(), ch.w_first.end(), 0.0);
    std::fill(ch.w_second.begin(), ch.w_second.end(), 0.0);
  }
  for (auto& layer : z.layers) {
    for (auto& h : layer.heads) {
      h.w_q *= 0.0;
      h.w_k *= 0.0;
      h.w_v *= 0.0;
    }
    layer.w_proj *= 0.0;
  }
  z.w_out *= 0.0;
  return z;
}

template <typename Fn>
void for_each_block(ModelParams& p, Fn&& fn) {
  for (auto& ch : p.kernels.channels) {
    fn(std::span<double>(ch.w_first), 0);
    fn(std::span<double>(ch.w_second), 0);
  }
  for (auto& layer : p.layers) {
    for (auto& h : layer.heads) {
      fn(h.w_q.values(), 1);
      fn(h.w_k.values(), 1);
      fn(h.w_v.values(), 2);
    }
    fn(layer.w_proj.values(), 2);
  }
  fn(p.w_out.values(), 3);
}

}  // namespace

ForwardResult forward(const Matrix& window, const ModelParams& params, const TrainConfig& cfg) {
  ForwardCache c = forward_cached(window, params, cfg, cfg.layer_options());
  ForwardResult out;
  out.recon = std::move(c.recon);
  for (auto& lf : c.layers) out.trace.s.push_back(std::move(lf.s_avg));
  out.trace.sigma_last = svd(out.trace.s.back()).sigma;
  return out;
}

LossBreakdown loss_and_gradient(const Matrix& window, const ModelParams& params,
                                const TrainConfig& cfg, ModelParams& grad,
                                std::vector<double>* last_sigma) {
  const LayerOptions opts = cfg.layer_options();
  ForwardCache c = forward_cached(window, params, cfg, opts);
  LossBreakdown loss;
  loss.reconstruction = squared_error(window, c.recon);

  const std::size_t n_layers = params.layers.size();
  std::vector<Matrix> reg_grads(n_layers);
  const bool regularize = cfg.lambda_reg > 0.0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const bool need = regularize || (l + 1 == n_layers && last_sigma != nullptr);
    if (!need) continue;
    AloraLayerLoss al = layer_alora_loss(c.layers[l].s_avg, cfg.rank_r);
    loss.regularization += al.loss;
    if (regularize) reg_grads[l] = al.grad_s_avg * cfg.lambda_reg;
    if (l + 1 == n_layers && last_sigma != nullptr) *last_sigma = std::move(al.sigma);
  }
  if (!regularize) loss.regularization = 0.0;
  loss.total = loss.reconstruction + cfg.lambda_reg * loss.regularization;

  grad = zeros_like(params);
  Matrix d_recon = c.recon - window;
  d_recon *= 2.0;
  const Matrix& z_last = c.layers.back().output;
  grad.w_out = matmul_tn(z_last, d_recon);
  Matrix dz = matmul_nt(d_recon, params.w_out);
  for (std::size_t l = n_layers; l-- > 0;) {
    LayerGradient lg = layer_backward(c.layers[l], params.layers[l], opts, dz,
                                      regularize ? &reg_grads[l] : nullptr);
    grad.layers[l] = std::move(lg.params);
    dz = std::move(lg.input);
  }
  grad.kernels = embed_backward(window, params.kernels, dz);
  return loss;
}

LossBreakdown total_loss(std::span<const Matrix> batch, const ModelParams& params,
                         const TrainConfig& cfg) {
  if (!(cfg.lambda_reg >= 0.0)) throw ConfigError("total_loss: lambda_reg must be >= 0");
  const LayerOptions opts = cfg.layer_options();
  LossBreakdown loss;
  for (const Matrix& window : batch) {
    ForwardCache c = forward_cached(window, params, cfg, opts);
    loss.reconstruction += squared_error(window, c.recon);
    for (const auto& lf : c.layers) loss.regularization += layer_alora_loss(lf.s_avg, cfg.rank_r).loss;
  }
  loss.total = loss.reconstruction + cfg.lambda_reg * loss.regularization;
  return loss;
}

std::vector<double> pack_params(const ModelParams& params) {
  std::vector<double> flat;
  ModelParams& p = const_cast<ModelParams&>(params);
  for_each_block(p, [&](std::span<double> block, int) { flat.insert(flat.end(), block.begin(), block.end()); });
  return flat;
}

void unpack_params(std::span<const double> flat, ModelParams& params) {
  std::size_t offset = 0;
  for_each_block(params, [&](std::span<double> block, int) {
    if (offset + block.size() > flat.size()) throw ShapeError("unpack_params: too few values");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), block.size(), block.begin());
    offset += block.size();
  });
  if (offset != flat.size()) throw ShapeError("unpack_params: too many values");
}

std::vector<std::uint8_t> trainable_mask(const ModelParams& params, const TrainConfig& cfg) {
  // Block kinds: 0 embedding, 1 query/key, 2 value path, 3 output.
  const bool freeze_embed = cfg.freeze_embedding || cfg.embedding == EmbeddingMode::identity;
  std::vector<std::uint8_t> mask;
  ModelParams& p = const_cast<ModelParams&>(params);
  for_each_block(p, [&](std::span<double> block, int kind) {
    bool on = true;
    if (kind == 0) on = !freeze_embed;
    if (kind == 2) on = !cfg.freeze_values;
    if (kind == 3) on = !cfg.freeze_output;
    mask.insert(mask.end(), block.size(), on ? 1 : 0);
  });
  return mask;
}

AdamOptimizer::AdamOptimizer(std::size_t size, double learning_rate, double beta1, double beta2,
                             double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void AdamOptimizer::step(std::span<double> params, std::span<const double> grad,
                         std::span<const std::uint8_t> mask) {
  if (params.size() != m_.size() || grad.size() != m_.size() || mask.size() != m_.size()) {
    throw ShapeError("adam: size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!mask[i]) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double calibrate_h1(std::span<const double> sigma4, std::span<const double> sigma5) {
  double h1 = 0.0;
  for (double s : sigma4) h1 = std::max(h1, s);
  for (double s : sigma5) h1 = std::max(h1, s);
  return h1;
}

TrainResult train(const TimeSeriesFrame& train_frame, const TrainConfig& cfg) {
  cfg.validate();
  if (train_frame.length() < cfg.window) {
    throw DataError("train: " + std::to_string(train_frame.length()) +
                    " rows is fewer than the window length " + std::to_string(cfg.window));
  }
  return train(train_frame, cfg, init_model(train_frame, cfg));
}

TrainResult train(const TimeSeriesFrame& train_frame, const TrainConfig& cfg, ModelParams initial) {
  cfg.validate();
  initial.validate();
  if (train_frame.dims() != initial.input_dims()) {
    throw ShapeError("train: frame has " + std::to_string(train_frame.dims()) +
                     " series, model expects " + std::to_string(initial.input_dims()));
  }
  const std::vector<Matrix> all = windows(train_frame, cfg.window, 1);
  const std::size_t val_count =
      static_cast<std::size_t>(std::floor(static_cast<double>(all.size()) * cfg.val_fraction));
  const std::size_t train_count = all.size() - val_count;
  if (train_count == 0) throw DataError("train: no training windows left after the validation split");
  const std::span<const Matrix> val_windows(all.data() + train_count, val_count);

  TrainResult result;
  result.params = std::move(initial);
  std::vector<double> flat = pack_params(result.params);
  const std::vector<std::uint8_t> mask = trainable_mask(result.params, cfg);
  AdamOptimizer adam(flat.size(), cfg.learning_rate);
  CounterRng shuffle_rng(cfg.seed, 4);

  std::vector<std::size_t> order(train_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad_sum(flat.size());
  ModelParams grad;
  std::vector<double> sigma;

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    EpochRecord rec{epoch, 0.0, 0.0, 0.0};
    std::vector<double> sigma4;
    std::vector<double> sigma5;
    for (std::size_t begin = 0; begin < train_count; begin += cfg.batch_size) {
      const std::size_t end = std::min(train_count, begin + cfg.batch_size);
      std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
      for (std::size_t b = begin; b < end; ++b) {
        const LossBreakdown l = loss_and_gradient(all[order[b]], result.params, cfg, grad, &sigma);
        if (!std::isfinite(l.total)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", window " +
                             std::to_string(order[b]) + " (reconstruction " +
                             std::to_string(l.reconstruction) + ", penalty " +
                             std::to_string(l.regularization) + ")");
        }
        rec.train_reconstruction += l.reconstruction;
        rec.train_regularization += l.regularization;
        sigma4.push_back(sigma.size() > 3 ? sigma[3] : 0.0);
        sigma5.push_back(sigma.size() > 4 ? sigma[4] : 0.0);
        const std::vector<double> g = pack_params(grad);
        for (std::size_t i = 0; i < g.size(); ++i) grad_sum[i] += g[i];
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (double& g : grad_sum) g *= inv;
      if (!all_finite(grad_sum)) throw NumericError("train: non-finite gradient at epoch " + std::to_string(epoch));
      adam.step(flat, grad_sum, mask);
      unpack_params(flat, result.params);
    }
    rec.train_reconstruction /= static_cast<double>(train_count);
    rec.train_regularization /= static_cast<double>(train_count);
    result.history.sigma4 = std::move(sigma4);
    result.history.sigma5 = std::move(sigma5);

    if (val_count > 0) {
      const LossBreakdown vl = total_loss(val_windows, result.params, cfg);
      if (!std::isfinite(vl.total)) throw NumericError("train: non-finite validation loss");
      rec.val_loss = vl.total / static_cast<double>(val_count);
    }
    result.history.epochs.push_back(rec);

    if (val_count > 0) {
      if (rec.val_loss < best_val) {
        best_val = rec.val_loss;
        since_best = 0;
      } else if (++since_best >= cfg.patience && cfg.patience > 0) {
        result.history.stopped_early = true;
        break;
      }
    }
  }
  result.thresholds.h1 = calibrate_h1(result.history.sigma4, result.history.sigma5);
  return result;
}

std::size_t alora_t_score(std::span<const double> sigma, double h1) {
  return static_cast<std::size_t>(std::count_if(sigma.begin(), sigma.end(), [h1](double s) { return s > h1; }));
}

std::size_t alora_t_score(const AttentionTrace& trace, double h1) {
  return alora_t_score(trace.sigma_last, h1);
}

double anomaly_score(std::span<const double> y, std::span<const double> recon, std::size_t score) {
  if (y.size() != recon.size()) throw ShapeError("anomaly_score: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - recon[i]) * (y[i] - recon[i]);
  return acc * static_cast<double>(score);
}

ScoreSeries score_series(const TimeSeriesFrame& frame, const ModelParams& params,
                         const TrainConfig& cfg, double h1) {
  const std::size_t n = frame.length();
  const std::size_t d = frame.dims();
  if (d != params.input_dims()) {
    throw ShapeError("score: frame has " + std::to_string(d) + " series, model expects " +
                     std::to_string(params.input_dims()));
  }
  if (n < cfg.window) {
    throw DataError("score: " + std::to_string(n) + " rows is fewer than the window length " +
                    std::to_string(cfg.window));
  }
  const std::size_t t_len = cfg.window;
  ScoreSeries out;
  out.as.resize(n);
  out.residual_sq.resize(n);
  out.alora_score.resize(n);
  out.residuals = Matrix(n, d);
  out.warmup = t_len - 1;

  auto record_row = [&](std::size_t t, const Matrix& window, const Matrix& recon, std::size_t row,
                        std::size_t score) {
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = window(row, j) - recon(row, j);
      out.residuals(t, j) = diff * diff;
      total += diff * diff;
    }
    out.residual_sq[t] = total;
    out.alora_score[t] = score;
    out.as[t] = anomaly_score(window.row(row), recon.row(row), score);
  };

  for (std::size_t start = 0; start + t_len <= n; ++start) {
    const Matrix window = frame.values.slice_rows(start, t_len);
    const ForwardResult fr = forward(window, params, cfg);
    const std::size_t score = alora_t_score(fr.trace, h1);
    if (start == 0) {
      for (std::size_t row = 0; row < t_len; ++row) record_row(row, window, fr.recon, row, score);
    } else {
      record_row(start + t_len - 1, window, fr.recon, t_len - 1, score);
    }
  }
  return out;
}

ScoreSeries detect(const TimeSeriesFrame& frame, const ModelParams& params, const TrainConfig& cfg,
                   const Thresholds& thresholds) {
  if (!thresholds.h2) throw ConfigError("detect: alarm threshold h2 is not set");
  ScoreSeries out = score_series(frame, params, cfg, thresholds.h1);
  out.alarms.resize(out.as.size());
  for (std::size_t t = 0; t < out.as.size(); ++t) out.alarms[t] = out.as[t] > *thresholds.h2;
  return out;
}

}  // namespace alora
