#pragma once

#include "linksae/simharness.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace linksae {

/// Run configuration shared by the subcommands. Every section is optional;
/// unknown keys anywhere are ConfigErrors.
struct RunConfig {
  std::uint64_t seed = 1;
  std::optional<std::string> output_dir;
  PopulationSpec population;
  HarnessOptions harness;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved configuration, suitable for re-running.
nlohmann::json to_json(const RunConfig& config);

/// Seeds are unsigned 64-bit decimal integers.
std::uint64_t parse_seed(const std::string& text);

}  // namespace linksae
