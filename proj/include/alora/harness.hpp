#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

namespace alora {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "out";
};

/// Maps an exception to the exit-code scheme: configuration and shape errors
/// 2, data and I/O errors 3, numeric failures 4.
int exit_code_for(const std::exception& e);

int cmd_train(const CommandOptions& opts);
int cmd_score(const CommandOptions& opts);
int cmd_localize(const CommandOptions& opts);
int cmd_eval(const CommandOptions& opts);
int cmd_simulate(const CommandOptions& opts);
int cmd_star_check(const CommandOptions& opts);

/// Dispatches by name ("train", "score", ...); errors are reported on stderr
/// and turned into exit codes.
int run_command(const std::string& name, const CommandOptions& opts);

}  // namespace alora
