#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "alora/data.hpp"
#include "alora/model.hpp"

namespace alora {

struct ConfigKey {
  std::string section;
  std::string key;
  std::string fallback;  // empty means unset
  std::string help;
};

/// Every accepted section/key pair with its default.
const std::vector<ConfigKey>& config_schema();

/// Flat key=value configuration grouped by [section]. Lines starting with
/// '#' or ';' are comments. Unknown sections or keys are rejected.
class RunConfig {
 public:
  RunConfig() = default;
  static RunConfig parse(std::string_view text, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section, const std::string& key) const;
  /// True only when the file (or set()) supplied a non-empty value.
  bool is_set(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  std::string text(const std::string& section, const std::string& key) const;
  std::size_t count(const std::string& section, const std::string& key) const;
  double real(const std::string& section, const std::string& key) const;
  bool flag(const std::string& section, const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& section, const std::string& key) const;

  TrainConfig train_config() const;
  MeanShiftSpec mean_shift_spec() const;

  /// Every schema key with its effective value, in schema order.
  std::string resolved() const;
  void write_resolved(const std::filesystem::path& path) const;

 private:
  std::map<std::pair<std::string, std::string>, std::string> values_;
};

}  // namespace alora
