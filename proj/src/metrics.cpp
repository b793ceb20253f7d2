#include "alora/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "alora/csv.hpp"
#include "alora/error.hpp"
#include "alora/localize.hpp"

namespace alora {

namespace {

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

SweepPoint from_counts(double threshold, const PointCounts& c) {
  SweepPoint p;
  p.threshold = threshold;
  p.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  p.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  p.f1 = harmonic(p.precision, p.recall);
  return p;
}

}  // namespace

BestF1 best_f1_sweep(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("best_f1_sweep: scores and labels differ in length");
  const auto positives = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  if (positives == 0) throw DataError("best_f1_sweep: no positive labels, F1 is undefined");
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("best_f1_sweep: NaN score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  BestF1 best;
  best.f1 = -1.0;
  PointCounts counts{0, 0, positives};
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      if (labels[order[i]]) {
        ++counts.tp;
        --counts.fn;
      } else {
        ++counts.fp;
      }
      ++i;
    }
    const SweepPoint p = from_counts(v, counts);
    best.points.push_back(p);
    // Thresholds descend, so >= hands ties to the smaller threshold.
    if (p.f1 >= best.f1) {
      best.f1 = p.f1;
      best.precision = p.precision;
      best.recall = p.recall;
      best.threshold = v;
    }
  }
  std::reverse(best.points.begin(), best.points.end());
  best.h2 = std::nextafter(best.threshold, -std::numeric_limits<double>::infinity());
  return best;
}

SweepPoint point_f1(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels) {
  if (predicted.size() != labels.size()) throw ShapeError("point_f1: length mismatch");
  PointCounts c;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (predicted[t] && labels[t]) ++c.tp;
    else if (predicted[t]) ++c.fp;
    else if (labels[t]) ++c.fn;
  }
  return from_counts(0.0, c);
}

namespace {

// Distance from every timestep in [0, extent) to the nearest point of `events`.
std::vector<double> nearest_distance(std::span<const EventSegment> events, std::size_t extent) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(extent, inf);
  for (const auto& e : events) {
    for (std::size_t t = e.start; t < e.end && t < extent; ++t) dist[t] = 0.0;
  }
  for (std::size_t t = 1; t < extent; ++t) dist[t] = std::min(dist[t], dist[t - 1] + 1.0);
  for (std::size_t t = extent; t-- > 1;) dist[t - 1] = std::min(dist[t - 1], dist[t] + 1.0);
  return dist;
}

double mean_affinity(std::span<const EventSegment> from, std::span<const EventSegment> to,
                     std::size_t extent, double horizon) {
  const std::vector<double> dist = nearest_distance(to, extent);
  double total = 0.0;
  for (const auto& e : from) {
    double gap = 0.0;
    for (std::size_t t = e.start; t < e.end; ++t) gap = std::max(gap, dist[t]);
    total += std::max(0.0, 1.0 - gap / horizon);
  }
  return total / static_cast<double>(from.size());
}

void check_events(std::span<const EventSegment> events, const char* what) {
  for (const auto& e : events) {
    if (e.start >= e.end) throw DataError(std::string("affiliation: empty ") + what + " event");
  }
}

}  // namespace

AffiliationResult affiliation_pr(std::span<const EventSegment> predicted,
                                 std::span<const EventSegment> truth, std::size_t horizon) {
  if (horizon == 0) throw ConfigError("affiliation: horizon must be >= 1");
  if (truth.empty()) throw DataError("affiliation: no true events");
  check_events(predicted, "predicted");
  check_events(truth, "true");
  std::size_t extent = 0;
  for (const auto& e : predicted) extent = std::max(extent, e.end);
  for (const auto& e : truth) extent = std::max(extent, e.end);
  const double h = static_cast<double>(horizon);

  AffiliationResult r;
  if (predicted.empty()) {
    r.precision_undefined = true;
    return r;
  }
  r.precision = mean_affinity(predicted, truth, extent, h);
  r.recall = mean_affinity(truth, predicted, extent, h);
  r.f1 = harmonic(r.precision, r.recall);
  return r;
}

std::size_t top_count(std::size_t truth_size, std::size_t p_percent) {
  return (truth_size * p_percent + 99) / 100;
}

namespace {

void check_truth(std::span<const std::size_t> truth) {
  if (truth.empty()) throw DataError("localization metric: empty truth set");
}

bool in_truth(std::span<const std::size_t> truth, std::size_t idx) {
  return std::find(truth.begin(), truth.end(), idx) != truth.end();
}

}  // namespace

double hit_rate(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                std::size_t p_percent) {
  check_truth(truth);
  const std::size_t k = std::min(top_count(truth.size(), p_percent), ranked.size());
  std::size_t hits = 0;
  for (std::size_t j = 0; j < k; ++j) hits += in_truth(truth, ranked[j]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double ndcg(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
            std::size_t p_percent) {
  check_truth(truth);
  const std::size_t k = std::min(top_count(truth.size(), p_percent), ranked.size());
  double dcg = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (in_truth(truth, ranked[j])) dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t j = 0; j < truth.size(); ++j) idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  return dcg / idcg;
}

LocalizationSummary localization_scores(const Matrix& las, const LocalizationTruth& truth,
                                        std::size_t p_percent) {
  if (truth.steps() != las.rows()) throw ShapeError("localization_scores: truth and LAS lengths differ");
  LocalizationSummary s;
  for (std::size_t t = 0; t < las.rows(); ++t) {
    if (!truth.defined(t)) continue;
    const auto ranked = rank_series(las.row(t), las.cols());
    s.hit_rate += hit_rate(ranked, truth.at(t), p_percent);
    s.ndcg += ndcg(ranked, truth.at(t), p_percent);
    ++s.steps;
  }
  if (s.steps > 0) {
    s.hit_rate /= static_cast<double>(s.steps);
    s.ndcg /= static_cast<double>(s.steps);
  }
  return s;
}

double ips(const Matrix& las, std::span<const EventSegment> segments, const LocalizationTruth& truth,
           std::size_t p_percent) {
  if (truth.steps() != las.rows()) throw ShapeError("ips: truth and LAS lengths differ");
  const std::size_t d = las.cols();
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& seg : segments) {
    if (seg.start >= seg.end || seg.end > las.rows()) throw DataError("ips: segment out of range");
    const auto g = truth.over(seg);
    if (g.empty()) continue;
    std::vector<double> peak(d, -std::numeric_limits<double>::infinity());
    for (std::size_t t = seg.start; t < seg.end; ++t)
      for (std::size_t j = 0; j < d; ++j) peak[j] = std::max(peak[j], las(t, j));
    const auto predicted = rank_series(peak, std::min(top_count(g.size(), p_percent), d));
    std::size_t hits = 0;
    for (std::size_t j : predicted) hits += in_truth(g, j) ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(g.size());
    ++counted;
  }
  return counted > 0 ? total / static_cast<double>(counted) : 0.0;
}

void write_report(const Report& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const auto& [key, value] : report) out << key << '=' << value << '\n';
}

void write_sweep_csv(const BestF1& sweep, const std::filesystem::path& path) {
  CsvWriter out(path, {"threshold", "precision", "recall", "f1"});
  for (const auto& p : sweep.points) {
    out.write_row({format_double(p.threshold), format_double(p.precision), format_double(p.recall),
                   format_double(p.f1)});
  }
}

}  // namespace alora
