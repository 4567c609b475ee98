#pragma once

#include <iosfwd>

namespace msprt::cli {

inline constexpr int kExitCompleted = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitRejected = 10;

/// Relative --prior/--config paths that do not exist are looked up here.
inline constexpr const char* kConfigDirEnv = "MSPRT_CONFIG_DIR";

/// Entry point for the `msprt` tool: subcommands run, simulate and check.
/// Records and reports go to `out` (unless --out is given), diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace msprt::cli
