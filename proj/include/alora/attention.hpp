#pragma once

#include <cstddef>
#include <vector>

#include "alora/linalg.hpp"
#include "alora/rng.hpp"

namespace alora {

struct HeadParams {
  Matrix w_q;  // d_model x d_head
  Matrix w_k;
  Matrix w_v;
};

// One multi-head self-attention layer without feed-forward sublayer.
struct AttentionLayerParams {
  std::vector<HeadParams> heads;
  Matrix w_proj;  // d_model x d_model, applied to the concatenated head outputs
  std::size_t layer_index = 0;

  std::size_t d_model() const noexcept { return w_proj.rows(); }
  std::size_t head_count() const noexcept { return heads.size(); }
  std::size_t head_dim() const noexcept { return heads.empty() ? 0 : heads.front().w_v.cols(); }

  /// W_V,h times the rows of W_proj that head h feeds; the layer's value path
  /// is sum_h S_h Z (this matrix).
  Matrix head_value_map(std::size_t h) const;
  /// [W_V,1 ... W_V,H] * W_proj.
  Matrix effective_value_map() const;
  void validate() const;
};

/// Uniform [-1/sqrt(d_model), 1/sqrt(d_model)] initialisation.
AttentionLayerParams make_attention_layer(std::size_t d_model, std::size_t heads, CounterRng& rng,
                                          std::size_t layer_index = 0);

/// Single-head layer with the given value map (W_Q, W_K random, W_proj = I).
AttentionLayerParams make_single_head_layer(const Matrix& value_map, CounterRng& rng,
                                            std::size_t layer_index = 0);

enum class Activation { identity, gelu };

struct LayerOptions {
  bool skip = true;
  Activation activation = Activation::identity;
  AttentionMask mask;
};

double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

struct AttentionScores {
  std::vector<Matrix> per_head;
  Matrix average;
};

/// S_h = softmax_rows(Q_h K_h^T / sqrt(d_model) + M); average = mean over heads.
AttentionScores attention_scores(const Matrix& z, const AttentionLayerParams& params,
                                 const AttentionMask& mask = {});

// Everything the reverse pass needs from one layer evaluation.
struct LayerForward {
  Matrix input;
  std::vector<Matrix> q;
  std::vector<Matrix> k;
  std::vector<Matrix> v;
  std::vector<Matrix> s;
  Matrix concat;          // [S_1 V_1 ... S_H V_H]
  Matrix pre_activation;  // concat * W_proj (+ input when skip)
  Matrix output;
  Matrix s_avg;
};

/// z_next = act(concat_h(S_h z_prev W_V,h) * W_proj + [z_prev if skip]).
LayerForward layer_forward(const Matrix& z_prev, const AttentionLayerParams& params,
                           const LayerOptions& opts);

struct LayerGradient {
  AttentionLayerParams params;  // same layout as the layer, holding dL/dW
  Matrix input;                 // dL/dz_prev
};

/// Reverse pass for one layer. `grad_s_avg`, when non-null, is dL/dS_avg from
/// a loss on the head-averaged attention; each head receives 1/H of it.
LayerGradient layer_backward(const LayerForward& fwd, const AttentionLayerParams& params,
                             const LayerOptions& opts, const Matrix& grad_output,
                             const Matrix* grad_s_avg = nullptr);

struct AloraLayerLoss {
  double loss = 0.0;
  Matrix grad_s_avg;
  std::vector<double> sigma;
};

/// Truncated Geman penalty on the head-averaged attention matrix.
AloraLayerLoss layer_alora_loss(const Matrix& s_avg, std::size_t r);

}  // namespace alora
