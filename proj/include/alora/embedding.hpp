#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "alora/data.hpp"
#include "alora/linalg.hpp"
#include "alora/rng.hpp"

namespace alora {

struct CorrelationResult {
  double value = 0.0;
  bool degenerate = false;  // one input was constant; value is reported as 0
};

/// Rank correlation with average ranks for ties.
CorrelationResult spearman(std::span<const double> x, std::span<const double> y);
CorrelationResult pearson(std::span<const double> x, std::span<const double> y);
/// 1-based average ranks (ties share the mean of their positions).
std::vector<double> average_ranks(std::span<const double> x);

enum class CorrelationMethod { spearman, pearson };

struct SeriesPair {
  std::size_t i = 0;
  std::size_t j = 0;  // i < j
  double score = 0.0;  // |correlation|
  bool operator==(const SeriesPair&) const = default;
};

struct PairSelection {
  std::vector<SeriesPair> pairs;  // ranked by score, ties by (i, j)
};

/// Keeps the min(k, d(d-1)/2) most correlated series pairs of the training frame.
PairSelection select_pairs(const TimeSeriesFrame& train, std::size_t k,
                           CorrelationMethod method = CorrelationMethod::spearman);

/// Plain-text sidecar: one "i,j,score" line per pair.
void save_pairs(const PairSelection& sel, const std::filesystem::path& path);
PairSelection load_pairs(const std::filesystem::path& path);

// One output channel of the sparse embedding: a short filter over exactly two
// input series. Weight index w[j + (m-1)/2] is the tap at lag j.
struct EmbeddingChannel {
  std::size_t first = 0;
  std::size_t second = 0;
  std::vector<double> w_first;
  std::vector<double> w_second;
};

struct EmbeddingKernels {
  std::size_t kernel_size = 3;
  std::vector<EmbeddingChannel> channels;

  std::size_t d_model() const noexcept { return channels.size(); }
  std::size_t half_width() const noexcept { return (kernel_size - 1) / 2; }
  std::size_t parameter_count() const noexcept { return 2 * kernel_size * channels.size(); }
  /// Sum of channel k's taps on `series` (0 when the channel does not read it).
  double lag_sum(std::size_t k, std::size_t series) const;
  /// Throws ConfigError on even kernel sizes, bad tap counts, repeated series
  /// within a channel, or series indices >= d.
  void validate(std::size_t d) const;
};

/// Channels are assigned by cycling through the ranked pairs; taps are drawn
/// uniformly from [-1/sqrt(2m), 1/sqrt(2m)].
EmbeddingKernels make_pairwise_kernels(const PairSelection& sel, std::size_t d_model,
                                       std::size_t kernel_size, CounterRng& rng);

/// d_model == d: channel k passes series k through unchanged (its partner
/// series has all-zero taps).
EmbeddingKernels make_identity_kernels(std::size_t d, std::size_t kernel_size = 3);

enum class BoundaryPolicy { zero_pad };

/// out[t][k] = sum over the channel's two series s of sum_j w_{s,j} * y[t+j][s],
/// with rows outside the window read as zero.
Matrix embed(const Matrix& window, const EmbeddingKernels& kernels,
             BoundaryPolicy pads = BoundaryPolicy::zero_pad);

/// Gradient of <grad_out, embed(window)> with respect to every tap, returned
/// with the same layout as `kernels`.
EmbeddingKernels embed_backward(const Matrix& window, const EmbeddingKernels& kernels,
                                const Matrix& grad_out);

}  // namespace alora
