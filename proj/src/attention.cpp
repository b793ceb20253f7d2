#include "alora/attention.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "alora/error.hpp"

namespace alora {

Matrix AttentionLayerParams::head_value_map(std::size_t h) const {
  return matmul(heads.at(h).w_v, w_proj.slice_rows(h * head_dim(), head_dim()));
}

Matrix AttentionLayerParams::effective_value_map() const {
  Matrix stacked(d_model(), d_model());
  for (std::size_t h = 0; h < head_count(); ++h) stacked.set_cols(h * head_dim(), heads[h].w_v);
  return matmul(stacked, w_proj);
}

void AttentionLayerParams::validate() const {
  const std::size_t dm = d_model();
  if (heads.empty()) throw ConfigError("attention layer: no heads");
  if (!w_proj.is_square() || dm == 0) throw ConfigError("attention layer: W_proj must be square");
  if (dm % heads.size() != 0) {
    throw ConfigError("attention layer: head count " + std::to_string(heads.size()) +
                      " does not divide d_model " + std::to_string(dm));
  }
  const std::size_t dh = dm / heads.size();
  for (const auto& h : heads) {
    for (const Matrix* m : {&h.w_q, &h.w_k, &h.w_v}) {
      if (m->rows() != dm || m->cols() != dh) throw ConfigError("attention layer: projection shape mismatch");
    }
  }
}

AttentionLayerParams make_attention_layer(std::size_t d_model, std::size_t heads, CounterRng& rng,
                                          std::size_t layer_index) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("attention layer: heads must divide d_model");
  }
  const std::size_t dh = d_model / heads;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
  auto draw = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& x : m.values()) x = rng.uniform(-bound, bound);
    return m;
  };
  AttentionLayerParams p;
  p.layer_index = layer_index;
  for (std::size_t h = 0; h < heads; ++h) {
    HeadParams hp;
    hp.w_q = draw(d_model, dh);
    hp.w_k = draw(d_model, dh);
    hp.w_v = draw(d_model, dh);
    p.heads.push_back(std::move(hp));
  }
  p.w_proj = draw(d_model, d_model);
  return p;
}

AttentionLayerParams make_single_head_layer(const Matrix& value_map, CounterRng& rng,
                                            std::size_t layer_index) {
  if (!value_map.is_square()) throw ConfigError("single-head layer: value map must be square");
  AttentionLayerParams p = make_attention_layer(value_map.rows(), 1, rng, layer_index);
  p.heads[0].w_v = value_map;
  p.w_proj = Matrix::identity(value_map.rows());
  return p;
}

double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) noexcept {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

namespace {

void check_input(const Matrix& z, const AttentionLayerParams& params) {
  if (z.cols() != params.d_model()) {
    throw ShapeError("attention: input has " + std::to_string(z.cols()) + " columns, layer expects " +
                     std::to_string(params.d_model()));
  }
}

}  // namespace

AttentionScores attention_scores(const Matrix& z, const AttentionLayerParams& params,
                                 const AttentionMask& mask) {
  check_input(z, params);
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_model()));
  AttentionScores out;
  out.average = Matrix(z.rows(), z.rows());
  for (const auto& head : params.heads) {
    Matrix logits = matmul_nt(matmul(z, head.w_q), matmul(z, head.w_k));
    logits *= scale;
    out.per_head.push_back(softmax_rows(logits, mask));
    out.average += out.per_head.back();
  }
  out.average *= 1.0 / static_cast<double>(params.head_count());
  return out;
}

LayerForward layer_forward(const Matrix& z_prev, const AttentionLayerParams& params,
                           const LayerOptions& opts) {
  check_input(z_prev, params);
  const std::size_t t_len = z_prev.rows();
  const std::size_t dh = params.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_model()));

  LayerForward f;
  f.input = z_prev;
  f.concat = Matrix(t_len, params.d_model());
  f.s_avg = Matrix(t_len, t_len);
  for (std::size_t h = 0; h < params.head_count(); ++h) {
    const auto& head = params.heads[h];
    f.q.push_back(matmul(z_prev, head.w_q));
    f.k.push_back(matmul(z_prev, head.w_k));
    f.v.push_back(matmul(z_prev, head.w_v));
    Matrix logits = matmul_nt(f.q.back(), f.k.back());
    logits *= scale;
    f.s.push_back(softmax_rows(logits, opts.mask));
    f.s_avg += f.s.back();
    f.concat.set_cols(h * dh, matmul(f.s.back(), f.v.back()));
  }
  f.s_avg *= 1.0 / static_cast<double>(params.head_count());

  f.pre_activation = matmul(f.concat, params.w_proj);
  if (opts.skip) f.pre_activation += z_prev;
  f.output = f.pre_activation;
  if (opts.activation == Activation::gelu) {
    for (double& x : f.output.values()) x = gelu(x);
  }
  return f;
}

LayerGradient layer_backward(const LayerForward& fwd, const AttentionLayerParams& params,
                             const LayerOptions& opts, const Matrix& grad_output,
                             const Matrix* grad_s_avg) {
  if (grad_output.rows() != fwd.output.rows() || grad_output.cols() != fwd.output.cols()) {
    throw ShapeError("layer_backward: gradient shape mismatch");
  }
  const std::size_t dh = params.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_model()));
  const double head_share = 1.0 / static_cast<double>(params.head_count());

  Matrix d_pre = grad_output;
  if (opts.activation == Activation::gelu) {
    auto dp = d_pre.values();
    auto pre = fwd.pre_activation.values();
    for (std::size_t i = 0; i < dp.size(); ++i) dp[i] *= gelu_derivative(pre[i]);
  }

  LayerGradient g;
  g.params.layer_index = params.layer_index;
  g.params.w_proj = matmul_tn(fwd.concat, d_pre);
  const Matrix d_concat = matmul_nt(d_pre, params.w_proj);
  g.input = opts.skip ? d_pre : Matrix(fwd.input.rows(), fwd.input.cols());

  for (std::size_t h = 0; h < params.head_count(); ++h) {
    const auto& head = params.heads[h];
    const Matrix d_head_out = d_concat.slice_cols(h * dh, dh);
    Matrix d_s = matmul_nt(d_head_out, fwd.v[h]);
    if (grad_s_avg != nullptr) d_s += *grad_s_avg * head_share;
    const Matrix d_v = matmul_tn(fwd.s[h], d_head_out);
    Matrix d_logits = softmax_rows_backward(fwd.s[h], d_s);
    d_logits *= scale;
    const Matrix d_q = matmul(d_logits, fwd.k[h]);
    const Matrix d_k = matmul_tn(d_logits, fwd.q[h]);

    HeadParams hg;
    hg.w_q = matmul_tn(fwd.input, d_q);
    hg.w_k = matmul_tn(fwd.input, d_k);
    hg.w_v = matmul_tn(fwd.input, d_v);
    g.params.heads.push_back(std::move(hg));

    g.input += matmul_nt(d_q, head.w_q);
    g.input += matmul_nt(d_k, head.w_k);
    g.input += matmul_nt(d_v, head.w_v);
  }
  return g;
}

AloraLayerLoss layer_alora_loss(const Matrix& s_avg, std::size_t r) {
  if (!s_avg.is_square()) throw ShapeError("layer_alora_loss: attention matrix must be square");
  const SvdResult dec = svd(s_avg);
  GemanLoss gl = geman_loss_grad(s_avg, dec, r);
  return {gl.loss, std::move(gl.grad), dec.sigma};
}

}  // namespace alora
