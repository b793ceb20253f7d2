#include "alora/localize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alora/csv.hpp"
#include "alora/error.hpp"
#include "alora/model.hpp"

namespace alora {

Matrix compute_b(std::span<const Matrix> value_maps, bool skip) {
  if (value_maps.empty()) throw ShapeError("compute_b: no layers");
  const std::size_t n = value_maps.front().rows();
  Matrix b = Matrix::identity(n);
  for (const Matrix& w : value_maps) {
    if (w.rows() != n || w.cols() != n) throw ShapeError("compute_b: value maps must be square and equal-sized");
    b = skip ? matmul(b, w + Matrix::identity(n)) : matmul(b, w);
  }
  return b;
}

Matrix compute_e(const EmbeddingKernels& kernels, std::size_t d, const Matrix& b) {
  const std::size_t dm = kernels.d_model();
  if (b.rows() != dm || b.cols() != dm) throw ShapeError("compute_e: B must be d_model x d_model");
  Matrix lag(d, dm);
  for (std::size_t k = 0; k < dm; ++k) {
    const auto& ch = kernels.channels[k];
    if (ch.first >= d || ch.second >= d) throw ShapeError("compute_e: channel references unknown series");
    lag(ch.first, k) = kernels.lag_sum(k, ch.first);
    lag(ch.second, k) = kernels.lag_sum(k, ch.second);
  }
  return matmul(lag, b);
}

Matrix compute_c(const Matrix& e, const Matrix& w_out) {
  if (e.cols() != w_out.rows()) throw ShapeError("compute_c: E columns must equal W_out rows");
  return matmul(e, w_out);
}

ContributionWeights contribution_weights(const ModelParams& params, bool skip, Activation activation) {
  std::vector<Matrix> maps;
  for (const auto& layer : params.layers) maps.push_back(layer.effective_value_map());
  ContributionWeights w;
  w.skip_mode = skip;
  w.approximate = activation != Activation::identity;
  w.b = compute_b(maps, skip);
  w.e = compute_e(params.kernels, params.input_dims(), w.b);
  w.c = compute_c(w.e, params.w_out);
  return w;
}

LasResult las(const Matrix& c, const Matrix& residuals, std::optional<std::size_t> top_k,
              ContributionSign sign) {
  const std::size_t d = c.rows();
  if (!c.is_square()) throw ShapeError("las: C must be square");
  if (residuals.cols() != d) throw ShapeError("las: residual columns must equal the series count");
  for (double r : residuals.values()) {
    if (r < 0.0) throw DataError("las: residuals must be non-negative");
  }
  Matrix weights = c;
  if (sign == ContributionSign::absolute) {
    for (double& x : weights.values()) x = std::abs(x);
  }
  LasResult out;
  out.top_k = top_k.value_or(d);
  if (out.top_k > d) {
    out.top_k = d;
    out.clamped = true;
  }
  if (out.top_k < d) {
    for (std::size_t i = 0; i < d; ++i) {
      const auto keep = rank_series(weights.row(i), out.top_k);
      std::vector<bool> on(d, false);
      for (std::size_t j : keep) on[j] = true;
      for (std::size_t j = 0; j < d; ++j) {
        if (!on[j]) weights(i, j) = 0.0;
      }
    }
  }
  out.scores = matmul_nt(residuals, weights);
  return out;
}

std::vector<std::size_t> rank_series(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) throw ConfigError("rank_series: k exceeds the number of series");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(k);
  return idx;
}

Matrix relative_reliance(const Matrix& c) {
  Matrix out = c;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < c.cols(); ++j) total += c(i, j);
    if (total == 0.0) throw NumericError("relative_reliance: row " + std::to_string(i) + " sums to zero");
    for (std::size_t j = 0; j < c.cols(); ++j) out(i, j) = c(i, j) / total;
  }
  return out;
}

void save_matrix_csv(const Matrix& m, const std::vector<std::string>& header,
                     const std::filesystem::path& path) {
  if (header.size() != m.cols()) throw ShapeError("save_matrix_csv: header width mismatch");
  CsvWriter out(path, header);
  std::vector<std::string> row(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] = format_double(m(r, j));
    out.write_row(row);
  }
}

}  // namespace alora
