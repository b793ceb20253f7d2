#include "alora/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "alora/csv.hpp"
#include "alora/error.hpp"

namespace alora {

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ShapeError("correlation: need two sequences of equal length >= 2");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

CorrelationResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ShapeError("correlation: need two sequences of equal length >= 2");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

PairSelection select_pairs(const TimeSeriesFrame& train, std::size_t k, CorrelationMethod method) {
  const std::size_t d = train.dims();
  if (d < 2) throw ConfigError("select_pairs: need at least two series");
  if (train.length() < 2) throw DataError("select_pairs: need at least two rows");

  std::vector<std::vector<double>> columns(d, std::vector<double>(train.length()));
  for (std::size_t t = 0; t < train.length(); ++t)
    for (std::size_t j = 0; j < d; ++j) columns[j][t] = train.values(t, j);
  if (method == CorrelationMethod::spearman) {
    for (auto& col : columns) col = average_ranks(col);
  }

  PairSelection sel;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      sel.pairs.push_back({i, j, std::abs(pearson(columns[i], columns[j]).value)});
    }
  }
  std::stable_sort(sel.pairs.begin(), sel.pairs.end(),
                   [](const SeriesPair& a, const SeriesPair& b) { return a.score > b.score; });
  if (sel.pairs.size() > k) sel.pairs.resize(k);
  return sel;
}

void save_pairs(const PairSelection& sel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const auto& p : sel.pairs) out << p.i << ',' << p.j << ',' << format_double(p.score) << '\n';
}

PairSelection load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  // Headerless: prepend a synthetic header so the CSV reader keeps every line.
  const CsvTable table = parse_csv("i,j,score\n" + buffer.str(), path.string());
  PairSelection sel;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.lines[r] - 1;
    if (row.size() != 3) throw DataError(path.string() + ":" + std::to_string(line) + ": expected i,j,score");
    const double i = parse_double_field(row[0], path.string(), line);
    const double j = parse_double_field(row[1], path.string(), line);
    if (i < 0 || j <= i || i != std::floor(i) || j != std::floor(j)) {
      throw DataError(path.string() + ":" + std::to_string(line) + ": invalid pair indices");
    }
    sel.pairs.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                         parse_double_field(row[2], path.string(), line)});
  }
  return sel;
}

double EmbeddingKernels::lag_sum(std::size_t k, std::size_t series) const {
  const auto& ch = channels.at(k);
  double acc = 0.0;
  if (ch.first == series) acc += std::accumulate(ch.w_first.begin(), ch.w_first.end(), 0.0);
  if (ch.second == series) acc += std::accumulate(ch.w_second.begin(), ch.w_second.end(), 0.0);
  return acc;
}

void EmbeddingKernels::validate(std::size_t d) const {
  if (kernel_size == 0 || kernel_size % 2 == 0) throw ConfigError("embedding: kernel size must be odd");
  if (channels.empty()) throw ConfigError("embedding: no channels");
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const auto& ch = channels[k];
    if (ch.first == ch.second) {
      throw ConfigError("embedding: channel " + std::to_string(k) + " must read two distinct series");
    }
    if (ch.first >= d || ch.second >= d) {
      throw ConfigError("embedding: channel " + std::to_string(k) + " references series >= " +
                        std::to_string(d));
    }
    if (ch.w_first.size() != kernel_size || ch.w_second.size() != kernel_size) {
      throw ConfigError("embedding: channel " + std::to_string(k) + " has wrong tap count");
    }
  }
}

EmbeddingKernels make_pairwise_kernels(const PairSelection& sel, std::size_t d_model,
                                       std::size_t kernel_size, CounterRng& rng) {
  if (sel.pairs.empty()) throw ConfigError("embedding: empty pair selection");
  if (kernel_size == 0 || kernel_size % 2 == 0) throw ConfigError("embedding: kernel size must be odd");
  const double bound = 1.0 / std::sqrt(2.0 * static_cast<double>(kernel_size));
  EmbeddingKernels kernels{kernel_size, {}};
  kernels.channels.reserve(d_model);
  for (std::size_t k = 0; k < d_model; ++k) {
    const auto& pair = sel.pairs[k % sel.pairs.size()];
    EmbeddingChannel ch{pair.i, pair.j, std::vector<double>(kernel_size), std::vector<double>(kernel_size)};
    for (double& w : ch.w_first) w = rng.uniform(-bound, bound);
    for (double& w : ch.w_second) w = rng.uniform(-bound, bound);
    kernels.channels.push_back(std::move(ch));
  }
  return kernels;
}

EmbeddingKernels make_identity_kernels(std::size_t d, std::size_t kernel_size) {
  if (d < 2) throw ConfigError("identity embedding: need at least two series");
  EmbeddingKernels kernels{kernel_size, {}};
  const std::size_t centre = (kernel_size - 1) / 2;
  for (std::size_t k = 0; k < d; ++k) {
    EmbeddingChannel ch{k, (k + 1) % d, std::vector<double>(kernel_size, 0.0),
                        std::vector<double>(kernel_size, 0.0)};
    ch.w_first[centre] = 1.0;
    kernels.channels.push_back(std::move(ch));
  }
  return kernels;
}

namespace {

void check_embed_args(const Matrix& window, const EmbeddingKernels& kernels) {
  kernels.validate(window.cols());
  if (window.rows() < kernels.kernel_size) {
    throw ShapeError("embed: window has fewer rows than the kernel size");
  }
}

}  // namespace

Matrix embed(const Matrix& window, const EmbeddingKernels& kernels, BoundaryPolicy) {
  check_embed_args(window, kernels);
  const std::size_t t_len = window.rows();
  const auto half = static_cast<std::ptrdiff_t>(kernels.half_width());
  Matrix out(t_len, kernels.d_model());
  for (std::size_t k = 0; k < kernels.d_model(); ++k) {
    const auto& ch = kernels.channels[k];
    for (std::size_t t = 0; t < t_len; ++t) {
      double acc = 0.0;
      for (std::ptrdiff_t j = -half; j <= half; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + j;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
        const auto tap = static_cast<std::size_t>(j + half);
        const auto row = static_cast<std::size_t>(src);
        acc += ch.w_first[tap] * window(row, ch.first) + ch.w_second[tap] * window(row, ch.second);
      }
      out(t, k) = acc;
    }
  }
  return out;
}

EmbeddingKernels embed_backward(const Matrix& window, const EmbeddingKernels& kernels,
                                const Matrix& grad_out) {
  check_embed_args(window, kernels);
  if (grad_out.rows() != window.rows() || grad_out.cols() != kernels.d_model()) {
    throw ShapeError("embed_backward: gradient shape mismatch");
  }
  const std::size_t t_len = window.rows();
  const auto half = static_cast<std::ptrdiff_t>(kernels.half_width());
  EmbeddingKernels grad = kernels;
  for (std::size_t k = 0; k < kernels.d_model(); ++k) {
    auto& g = grad.channels[k];
    std::fill(g.w_first.begin(), g.w_first.end(), 0.0);
    std::fill(g.w_second.begin(), g.w_second.end(), 0.0);
    for (std::size_t t = 0; t < t_len; ++t) {
      const double go = grad_out(t, k);
      if (go == 0.0) continue;
      for (std::ptrdiff_t j = -half; j <= half; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + j;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
        const auto tap = static_cast<std::size_t>(j + half);
        const auto row = static_cast<std::size_t>(src);
        g.w_first[tap] += go * window(row, g.first);
        g.w_second[tap] += go * window(row, g.second);
      }
    }
  }
  return grad;
}

}  // namespace alora
