#pragma once

#include <ostream>

namespace linksae {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitNumerical = 5;

/// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutputDirEnv = "LINKSAE_OUTPUT_DIR";

/// Parses the subcommand and its flags, runs it and writes its outputs.
/// Failures print one JSON line {"error": kind, "message": ...} to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace linksae
