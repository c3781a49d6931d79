#pragma once

#include <iosfwd>

namespace colortrigger::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;  // bad flags or configuration values
inline constexpr int kExitData = 3;   // I/O, parse and input-format failures

/// Entry point for the `colortrigger` tool: subcommands run, compare, synth
/// and inspect. Writes human-readable output to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace colortrigger::cli
