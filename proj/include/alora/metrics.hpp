#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "alora/linalg.hpp"
#include "alora/segments.hpp"

namespace alora {

struct SweepPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct BestF1 {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;  // alarms are score >= threshold
  double h2 = 0.0;         // largest value below threshold, so alarms are score > h2
  std::vector<SweepPoint> points;
};

struct PointCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// Point-wise F1 of the predicate score >= threshold at every distinct score.
/// Ties go to the smallest threshold. Throws DataError without positives.
BestF1 best_f1_sweep(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Precision/recall/F1 of binary predictions against labels.
SweepPoint point_f1(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels);

struct AffiliationResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // no predicted events
};

/// Affiliation-style event metrics: each event's affinity is
/// max(0, 1 - gap / horizon) where gap is the largest distance from a point of
/// the event to the nearest point of the other set.
AffiliationResult affiliation_pr(std::span<const EventSegment> predicted,
                                 std::span<const EventSegment> truth, std::size_t horizon);

/// Number of ranked entries examined: ceil(|g| * p / 100).
std::size_t top_count(std::size_t truth_size, std::size_t p_percent);

double hit_rate(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                std::size_t p_percent);
double ndcg(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
            std::size_t p_percent);

struct LocalizationSummary {
  double hit_rate = 0.0;
  double ndcg = 0.0;
  std::size_t steps = 0;  // timesteps with a defined truth set
};

/// Mean HR@P and NDCG@P over timesteps where truth is defined, ranking each
/// row of `las`.
LocalizationSummary localization_scores(const Matrix& las, const LocalizationTruth& truth,
                                        std::size_t p_percent);

/// Per segment: rank series by their max LAS over the segment, predict the top
/// ceil(|G_S| * p / 100), score |G_S ∩ P_S| / |G_S|; mean over segments with
/// non-empty truth.
double ips(const Matrix& las, std::span<const EventSegment> segments, const LocalizationTruth& truth,
           std::size_t p_percent = 100);

using Report = std::map<std::string, std::string>;
void write_report(const Report& report, const std::filesystem::path& path);
void write_sweep_csv(const BestF1& sweep, const std::filesystem::path& path);

}  // namespace alora
