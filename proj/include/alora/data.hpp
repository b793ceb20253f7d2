#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "alora/linalg.hpp"
#include "alora/segments.hpp"

namespace alora {

enum class AnomalyKind { spike, level_shift, variance_burst, trend };

struct Injection {
  AnomalyKind kind;
  std::size_t series;
  EventSegment segment;
};

// An N x d multivariate series. Row t is the observation at step t.
struct TimeSeriesFrame {
  Matrix values;
  std::vector<std::string> names;
  std::vector<std::string> timestamps;  // empty, or one per row
  std::optional<std::vector<std::uint8_t>> labels;
  std::optional<LocalizationTruth> loc_truth;
  std::vector<Injection> injections;

  std::size_t length() const noexcept { return values.rows(); }
  std::size_t dims() const noexcept { return values.cols(); }

  /// Throws DataError when names are not unique or optional columns have
  /// the wrong length.
  void validate() const;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<bool> constant;  // std == 0: series is only centered
};

/// Reads a header-first numeric CSV. A column named "timestamp" is kept as
/// text; `label_column`, when given, becomes the binary label sequence.
TimeSeriesFrame load_csv(const std::filesystem::path& path,
                         const std::optional<std::string>& label_column = std::nullopt);
void save_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path);

/// Companion file of "timestep,series_index" rows.
LocalizationTruth load_loc_truth(const std::filesystem::path& path, std::size_t steps);
void save_loc_truth(const LocalizationTruth& truth, const std::filesystem::path& path);

NormStats fit_norm_stats(const TimeSeriesFrame& frame);
std::pair<TimeSeriesFrame, NormStats> normalize(const TimeSeriesFrame& frame,
                                                const std::optional<NormStats>& stats = std::nullopt);
TimeSeriesFrame denormalize(const TimeSeriesFrame& frame, const NormStats& stats);

/// Averages non-overlapping blocks of `factor` rows; labels use the
/// any-positive rule and localization sets are merged.
TimeSeriesFrame downsample_mean(const TimeSeriesFrame& frame, std::size_t factor);

std::vector<std::size_t> window_starts(std::size_t n, std::size_t t, std::size_t stride);
std::vector<Matrix> windows(const TimeSeriesFrame& frame, std::size_t t, std::size_t stride = 1);

struct MeanShiftSpec {
  std::size_t n = 500;
  std::size_t t1 = 200;
  std::size_t t2 = 300;
  double delta = 3.0;
  std::array<double, 2> mu{0.0, 0.0};
  std::array<double, 2> sigma{1.0, 1.0};
  std::uint64_t seed = 0;
};

/// Bivariate i.i.d. Gaussian frame; series 0 is shifted by delta on [t1, t2),
/// which is labelled anomalous with localization truth {0}.
TimeSeriesFrame simulate_mean_shift(const MeanShiftSpec& spec);

/// Adds an anomaly pattern to one series over `at`. Magnitudes are in units
/// of the series' standard deviation:
///   spike / level_shift  +magnitude*sd on every step of the segment
///   variance_burst       zero-mean Gaussian noise with sd magnitude*sd
///   trend                linear ramp from 0 to magnitude*sd across the segment
TimeSeriesFrame inject_anomaly(const TimeSeriesFrame& frame, AnomalyKind kind, std::size_t series,
                               EventSegment at, double magnitude, std::uint64_t seed);

AnomalyKind parse_anomaly_kind(const std::string& name);

}  // namespace alora
