// cli.hpp - Command-line entry point.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dicke {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// `dicke <subcommand> --config <path> [--set k=v]... [--workers n] [--out dir]`.
/// args excludes the program name. Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dicke
