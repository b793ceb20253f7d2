#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "alora/attention.hpp"
#include "alora/linalg.hpp"

namespace alora {

/// Realised attention and value maps of one layer: S_h and
/// M_h = W_V,h * W_proj[rows of head h] for every head.
struct UnrollLayer {
  std::vector<Matrix> attention;
  std::vector<Matrix> value_maps;
};

UnrollLayer unroll_layer(const LayerForward& fwd, const AttentionLayerParams& params);

/// Row t of S^(L) ... S^(1) X W^(V,1) ... W^(V,L); multi-head layers expand
/// into one term per choice of head in every layer.
std::vector<double> unroll_no_skip(std::span<const UnrollLayer> layers, const Matrix& x_embedded,
                                   std::size_t t);
Matrix unroll_no_skip(std::span<const UnrollLayer> layers, const Matrix& x_embedded);

/// X + sum over non-empty layer subsets of (product of S) X (product of W^V),
/// one term per head choice. `term_count` receives the number of terms,
/// identity included: (H + 1)^L, which is 2^L for single-head layers.
Matrix unroll_skip(std::span<const UnrollLayer> layers, const Matrix& x_embedded,
                   std::size_t* term_count = nullptr);

enum class VerifyMode { no_skip, skip, ffn_regroup, approximation };
std::string to_string(VerifyMode mode);

struct VerificationReport {
  VerifyMode mode = VerifyMode::skip;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t term_count = 0;
  bool pass = false;
  bool asserted = true;  // false in approximation mode

  std::string line() const;
};

struct StarCase {
  std::size_t layers = 1;
  std::size_t t_len = 4;
  std::size_t d_model = 2;
  std::size_t heads = 1;
  bool causal = false;
  bool skip = true;
  Activation activation = Activation::identity;
  std::uint64_t seed = 0;

  std::string describe() const;
};

inline constexpr double kStarTolerance = 1e-6;

/// Random seeded layers and embedded input; compares the unrolled form with
/// the layer-by-layer forward pass. With GELU the report is in approximation
/// mode and asserts nothing.
VerificationReport verify_case(const StarCase& c);

/// b~_kj = sum_r w_rj b_kr by explicit summation against B * W, plus the
/// STAR form y_t^(j) = sum_k b~_kj sum_q a_tq x_q^(k) against (A X B) W.
VerificationReport verify_ffn_regroup(const Matrix& b, const Matrix& w_ffn, const Matrix& a,
                                      const Matrix& x_embedded);
VerificationReport verify_ffn_regroup(const Matrix& b, const Matrix& w_ffn, std::uint64_t seed,
                                      std::size_t t_len = 4);

/// Explicit double sum for b~.
Matrix regroup_weights(const Matrix& b, const Matrix& w_ffn);

/// Seeded grid over L in {1,2,3}, T in {4,8,16}, d_model in {2,4,8},
/// H in {1,2}, mask in {none, causal}, skip on and off.
std::vector<StarCase> default_star_grid(std::size_t count, std::uint64_t seed);

}  // namespace alora
