#include "alora/segments.hpp"

#include <algorithm>

namespace alora {

std::vector<EventSegment> events_from_labels(std::span<const std::uint8_t> labels) {
  std::vector<EventSegment> events;
  std::size_t t = 0;
  while (t < labels.size()) {
    if (labels[t] == 0) {
      ++t;
      continue;
    }
    const std::size_t start = t;
    while (t < labels.size() && labels[t] != 0) ++t;
    events.push_back({start, t});
  }
  return events;
}

void LocalizationTruth::add(std::size_t t, std::size_t series) {
  auto& set = sets_.at(t);
  auto it = std::lower_bound(set.begin(), set.end(), series);
  if (it == set.end() || *it != series) set.insert(it, series);
}

std::vector<std::size_t> LocalizationTruth::over(const EventSegment& seg) const {
  std::vector<std::size_t> out;
  for (std::size_t t = seg.start; t < seg.end && t < sets_.size(); ++t) {
    out.insert(out.end(), sets_[t].begin(), sets_[t].end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace alora
