#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace alora {

/// Half-open timestep range [start, end).
struct EventSegment {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start; }
  bool contains(std::size_t t) const noexcept { return t >= start && t < end; }
  bool overlaps(const EventSegment& o) const noexcept { return start < o.end && o.start < end; }
  bool operator==(const EventSegment&) const = default;
};

/// Maximal runs of positive labels.
std::vector<EventSegment> events_from_labels(std::span<const std::uint8_t> labels);

/// Per-timestep set of truly anomalous series. An empty set means "undefined
/// at this step".
class LocalizationTruth {
 public:
  LocalizationTruth() = default;
  explicit LocalizationTruth(std::size_t steps) : sets_(steps) {}

  std::size_t steps() const noexcept { return sets_.size(); }
  void add(std::size_t t, std::size_t series);
  const std::vector<std::size_t>& at(std::size_t t) const { return sets_.at(t); }
  bool defined(std::size_t t) const { return !sets_.at(t).empty(); }
  /// Union of the sets over a segment, sorted.
  std::vector<std::size_t> over(const EventSegment& seg) const;

  bool operator==(const LocalizationTruth&) const = default;

 private:
  std::vector<std::vector<std::size_t>> sets_;
};

}  // namespace alora
