#pragma once

// Subcommand drivers behind the `capcrl` executable. Each command resolves its
// configuration against built-in defaults, validates it, computes everything
// in memory and only then writes its outputs, so a failed run leaves no files.

#include "capcrl/error.hpp"
#include "capcrl/io.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace capcrl {

inline constexpr const char* kConfigEnvVar = "CAPCRL_CONFIG";

const std::vector<std::string>& command_names();

/// Built-in configuration for a command; every accepted key appears here.
Json command_defaults(const std::string& command);

/// Defaults overlaid with `overrides` (recursively for objects). Unknown keys
/// are input errors.
Json resolve_config(const std::string& command, const Json& overrides);

struct CommandRequest {
  std::string command;
  Json config = Json::object();        ///< the command's section from the config file plus flag overrides
  std::optional<std::uint64_t> seed;   ///< defaults to 0
  std::filesystem::path out = "capcrl-out";
};

/// Runs one command; errors are reported on `log` and mapped to an exit code.
int run_command(const CommandRequest& request, std::ostream& log);

/// 2 = input, 3 = numerical, 4 = no valid solution.
int exit_code(ErrorKind kind);

/// The report without its "run" object (timestamps, wall clock, output path).
Json report_payload(Json report);

}  // namespace capcrl
