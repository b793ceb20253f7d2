#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "alora/data.hpp"
#include "alora/model.hpp"

namespace alora {

struct Checkpoint {
  TrainConfig cfg;
  ModelParams params;
  std::optional<double> h1;
  std::optional<NormStats> norm;
  std::vector<std::string> series_names;
};

/// Little-endian binary: magic "ALORA1", version, config, h1, pair list,
/// channel table, normalisation stats, series names, then 64-bit parameters
/// in pack order. A key=value manifest is written next to it.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace alora
