#include "alora/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "alora/csv.hpp"
#include "alora/error.hpp"
#include "alora/rng.hpp"

namespace alora {

void TimeSeriesFrame::validate() const {
  if (names.size() != dims()) throw DataError("frame: expected one name per series");
  std::set<std::string> seen(names.begin(), names.end());
  if (seen.size() != names.size()) throw DataError("frame: series names must be unique");
  if (!timestamps.empty() && timestamps.size() != length()) {
    throw DataError("frame: timestamp count differs from row count");
  }
  if (labels && labels->size() != length()) throw DataError("frame: label count differs from row count");
  if (loc_truth && loc_truth->steps() != length()) {
    throw DataError("frame: localization truth length differs from row count");
  }
}

TimeSeriesFrame load_csv(const std::filesystem::path& path,
                         const std::optional<std::string>& label_column) {
  const CsvTable table = read_csv_file(path);
  if (table.header.empty()) throw DataError(path.string() + ": missing header");

  std::optional<std::size_t> ts_col;
  std::optional<std::size_t> label_col;
  std::vector<std::size_t> value_cols;
  TimeSeriesFrame frame;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (name == "timestamp") {
      ts_col = c;
    } else if (label_column && name == *label_column) {
      label_col = c;
    } else {
      value_cols.push_back(c);
      frame.names.push_back(name);
    }
  }
  if (label_column && !label_col) {
    throw DataError(path.string() + ": label column '" + *label_column + "' not found");
  }

  const std::size_t n = table.rows.size();
  const std::size_t d = value_cols.size();
  std::vector<double> values;
  values.reserve(n * d);
  std::vector<std::uint8_t> labels;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.lines[r];
    if (row.size() != table.header.size()) {
      throw DataError(path.string() + ":" + std::to_string(line) + ": expected " +
                      std::to_string(table.header.size()) + " fields, got " +
                      std::to_string(row.size()));
    }
    for (std::size_t c : value_cols) {
      values.push_back(parse_double_field(row[c], path.string(), line));
    }
    if (ts_col) frame.timestamps.push_back(row[*ts_col]);
    if (label_col) labels.push_back(parse_double_field(row[*label_col], path.string(), line) != 0.0);
  }
  frame.values = Matrix(n, d, std::move(values));
  if (label_col) frame.labels = std::move(labels);
  frame.validate();
  return frame;
}

void save_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path) {
  frame.validate();
  std::vector<std::string> header;
  if (!frame.timestamps.empty()) header.emplace_back("timestamp");
  header.insert(header.end(), frame.names.begin(), frame.names.end());
  if (frame.labels) header.emplace_back("label");
  CsvWriter out(path, header);
  std::vector<std::string> fields;
  for (std::size_t t = 0; t < frame.length(); ++t) {
    fields.clear();
    if (!frame.timestamps.empty()) fields.push_back(frame.timestamps[t]);
    for (double v : frame.values.row(t)) fields.push_back(format_double(v));
    if (frame.labels) fields.push_back((*frame.labels)[t] ? "1" : "0");
    out.write_row(fields);
  }
}

LocalizationTruth load_loc_truth(const std::filesystem::path& path, std::size_t steps) {
  const CsvTable table = read_csv_file(path);
  if (table.header.size() != 2) throw DataError(path.string() + ": expected timestep,series_index");
  LocalizationTruth truth(steps);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.lines[r];
    if (row.size() != 2) throw DataError(path.string() + ":" + std::to_string(line) + ": expected 2 fields");
    const double t = parse_double_field(row[0], path.string(), line);
    const double s = parse_double_field(row[1], path.string(), line);
    if (t < 0 || s < 0 || t != std::floor(t) || s != std::floor(s) || t >= static_cast<double>(steps)) {
      throw DataError(path.string() + ":" + std::to_string(line) + ": index out of range");
    }
    truth.add(static_cast<std::size_t>(t), static_cast<std::size_t>(s));
  }
  return truth;
}

void save_loc_truth(const LocalizationTruth& truth, const std::filesystem::path& path) {
  CsvWriter out(path, {"timestep", "series_index"});
  for (std::size_t t = 0; t < truth.steps(); ++t) {
    for (std::size_t s : truth.at(t)) out.write_row({std::to_string(t), std::to_string(s)});
  }
}

NormStats fit_norm_stats(const TimeSeriesFrame& frame) {
  const std::size_t n = frame.length();
  const std::size_t d = frame.dims();
  if (n == 0) throw DataError("fit_norm_stats: empty frame");
  NormStats stats{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), std::vector<bool>(d, false)};
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) mean += frame.values(t, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double diff = frame.values(t, j) - mean;
      var += diff * diff;
    }
    stats.mean[j] = mean;
    stats.std[j] = std::sqrt(var / static_cast<double>(n));
    stats.constant[j] = stats.std[j] == 0.0;
  }
  return stats;
}

std::pair<TimeSeriesFrame, NormStats> normalize(const TimeSeriesFrame& frame,
                                                const std::optional<NormStats>& given) {
  NormStats stats = given ? *given : fit_norm_stats(frame);
  const std::size_t d = frame.dims();
  if (stats.mean.size() != d || stats.std.size() != d) {
    throw ShapeError("normalize: statistics cover " + std::to_string(stats.mean.size()) +
                     " series, frame has " + std::to_string(d));
  }
  stats.constant.resize(d);
  for (std::size_t j = 0; j < d; ++j) stats.constant[j] = stats.std[j] == 0.0;
  TimeSeriesFrame out = frame;
  for (std::size_t t = 0; t < out.length(); ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      double& v = out.values(t, j);
      v -= stats.mean[j];
      if (!stats.constant[j]) v /= stats.std[j];
    }
  }
  return {std::move(out), std::move(stats)};
}

TimeSeriesFrame denormalize(const TimeSeriesFrame& frame, const NormStats& stats) {
  if (stats.mean.size() != frame.dims()) throw ShapeError("denormalize: statistics size mismatch");
  TimeSeriesFrame out = frame;
  for (std::size_t t = 0; t < out.length(); ++t) {
    for (std::size_t j = 0; j < out.dims(); ++j) {
      double& v = out.values(t, j);
      if (stats.std[j] != 0.0) v *= stats.std[j];
      v += stats.mean[j];
    }
  }
  return out;
}

TimeSeriesFrame downsample_mean(const TimeSeriesFrame& frame, std::size_t factor) {
  if (factor == 0) throw ConfigError("downsample_mean: factor must be >= 1");
  if (factor == 1) return frame;
  const std::size_t n = frame.length();
  const std::size_t d = frame.dims();
  const std::size_t blocks = (n + factor - 1) / factor;
  TimeSeriesFrame out;
  out.names = frame.names;
  out.values = Matrix(blocks, d);
  if (frame.labels) out.labels = std::vector<std::uint8_t>(blocks, 0);
  if (frame.loc_truth) out.loc_truth = LocalizationTruth(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t first = b * factor;
    const std::size_t last = std::min(n, first + factor);
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t t = first; t < last; ++t) acc += frame.values(t, j);
      out.values(b, j) = acc / static_cast<double>(last - first);
    }
    if (!frame.timestamps.empty()) out.timestamps.push_back(frame.timestamps[first]);
    for (std::size_t t = first; t < last; ++t) {
      if (frame.labels && (*frame.labels)[t]) (*out.labels)[b] = 1;
      if (frame.loc_truth) {
        for (std::size_t s : frame.loc_truth->at(t)) out.loc_truth->add(b, s);
      }
    }
  }
  return out;
}

std::vector<std::size_t> window_starts(std::size_t n, std::size_t t, std::size_t stride) {
  if (t == 0 || stride == 0) throw ConfigError("windows: window length and stride must be >= 1");
  if (n < t) {
    throw DataError("windows: series length " + std::to_string(n) + " is shorter than window " +
                    std::to_string(t));
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + t <= n; s += stride) starts.push_back(s);
  return starts;
}

std::vector<Matrix> windows(const TimeSeriesFrame& frame, std::size_t t, std::size_t stride) {
  std::vector<Matrix> out;
  for (std::size_t s : window_starts(frame.length(), t, stride)) {
    out.push_back(frame.values.slice_rows(s, t));
  }
  return out;
}

TimeSeriesFrame simulate_mean_shift(const MeanShiftSpec& spec) {
  if (!(spec.t1 < spec.t2 && spec.t2 <= spec.n)) {
    throw ConfigError("simulate_mean_shift: need 0 <= t1 < t2 <= n");
  }
  CounterRng rng(spec.seed, 0x5151);
  TimeSeriesFrame frame;
  frame.names = {"x1", "x2"};
  frame.values = Matrix(spec.n, 2);
  frame.labels = std::vector<std::uint8_t>(spec.n, 0);
  frame.loc_truth = LocalizationTruth(spec.n);
  for (std::size_t t = 0; t < spec.n; ++t) {
    const bool shifted = t >= spec.t1 && t < spec.t2;
    frame.values(t, 0) = rng.normal(spec.mu[0] + (shifted ? spec.delta : 0.0), spec.sigma[0]);
    frame.values(t, 1) = rng.normal(spec.mu[1], spec.sigma[1]);
    if (shifted) {
      (*frame.labels)[t] = 1;
      frame.loc_truth->add(t, 0);
    }
  }
  if (!all_finite(frame.values.values())) throw NumericError("simulate_mean_shift: non-finite sample");
  return frame;
}

TimeSeriesFrame inject_anomaly(const TimeSeriesFrame& frame, AnomalyKind kind, std::size_t series,
                               EventSegment at, double magnitude, std::uint64_t seed) {
  if (series >= frame.dims()) throw ConfigError("inject_anomaly: series index out of range");
  if (!(at.start < at.end && at.end <= frame.length())) {
    throw ConfigError("inject_anomaly: segment out of range");
  }
  for (const auto& prior : frame.injections) {
    if (prior.series == series && prior.segment.overlaps(at)) {
      throw ConfigError("inject_anomaly: overlaps an earlier injection on series " +
                        std::to_string(series));
    }
  }

  const NormStats stats = fit_norm_stats(frame);
  const double sd = stats.std[series] > 0.0 ? stats.std[series] : 1.0;
  TimeSeriesFrame out = frame;
  CounterRng rng(seed, 0xA11A + series);
  const double span = static_cast<double>(at.length());
  for (std::size_t t = at.start; t < at.end; ++t) {
    double add = 0.0;
    switch (kind) {
      case AnomalyKind::spike:
      case AnomalyKind::level_shift:
        add = magnitude * sd;
        break;
      case AnomalyKind::variance_burst:
        add = magnitude * sd * rng.normal();
        break;
      case AnomalyKind::trend:
        add = span > 1.0 ? magnitude * sd * static_cast<double>(t - at.start) / (span - 1.0)
                         : magnitude * sd;
        break;
    }
    out.values(t, series) += add;
  }

  if (!out.labels) out.labels = std::vector<std::uint8_t>(out.length(), 0);
  if (!out.loc_truth) out.loc_truth = LocalizationTruth(out.length());
  for (std::size_t t = at.start; t < at.end; ++t) {
    (*out.labels)[t] = 1;
    out.loc_truth->add(t, series);
  }
  out.injections.push_back({kind, series, at});
  return out;
}

AnomalyKind parse_anomaly_kind(const std::string& name) {
  if (name == "spike") return AnomalyKind::spike;
  if (name == "level_shift") return AnomalyKind::level_shift;
  if (name == "variance_burst") return AnomalyKind::variance_burst;
  if (name == "trend") return AnomalyKind::trend;
  throw ConfigError("unknown anomaly kind '" + name + "'");
}

}  // namespace alora
