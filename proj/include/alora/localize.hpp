#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alora/attention.hpp"
#include "alora/embedding.hpp"
#include "alora/linalg.hpp"

namespace alora {

struct ModelParams;

struct ContributionWeights {
  Matrix b;  // d_model x d_model
  Matrix e;  // d x d_model
  Matrix c;  // d x d
  bool skip_mode = true;
  bool approximate = false;  // set when the model uses a nonlinear activation

  std::string label() const { return approximate ? "approximation (nonlinear path)" : "exact"; }
};

/// Product over layers l = 1..L of (W^(V,l) + I) with skip, W^(V,l) without.
Matrix compute_b(std::span<const Matrix> value_maps, bool skip);

/// E_ij = sum_k (lag-sum of channel k's taps on series i) * b_kj.
Matrix compute_e(const EmbeddingKernels& kernels, std::size_t d, const Matrix& b);

/// C = E * W_out.
Matrix compute_c(const Matrix& e, const Matrix& w_out);

ContributionWeights contribution_weights(const ModelParams& params, bool skip, Activation activation);

enum class ContributionSign { signed_value, absolute };

struct LasResult {
  Matrix scores;            // timesteps x d
  std::size_t top_k = 0;    // entries summed per row
  bool clamped = false;     // requested top_k exceeded d
};

/// LAS_t^(i) = sum_j C_ij r_t^(j), over all j or over the top_k largest
/// entries of row i of C (ties by lower index).
LasResult las(const Matrix& c, const Matrix& residuals, std::optional<std::size_t> top_k = std::nullopt,
              ContributionSign sign = ContributionSign::signed_value);

/// Indices of the k largest values, descending; ties by lower index.
std::vector<std::size_t> rank_series(std::span<const double> scores, std::size_t k);

/// C_ij / sum_k C_ik per row.
Matrix relative_reliance(const Matrix& c);

void save_matrix_csv(const Matrix& m, const std::vector<std::string>& header,
                     const std::filesystem::path& path);

}  // namespace alora
