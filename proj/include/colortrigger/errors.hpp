#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace colortrigger {

enum class errc {
  zero_vector,
  non_monotonic_timestep,
  dimension_mismatch,
  infeasible_budget,
  invalid_config,
  bad_magic,
  version_mismatch,
  truncated_file,
  parse_error,
  io_error,
};

constexpr std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::zero_vector: return "ZeroVector";
    case errc::non_monotonic_timestep: return "NonMonotonicTimestep";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::infeasible_budget: return "InfeasibleBudget";
    case errc::invalid_config: return "InvalidConfig";
    case errc::bad_magic: return "BadMagic";
    case errc::version_mismatch: return "VersionMismatch";
    case errc::truncated_file: return "TruncatedFile";
    case errc::parse_error: return "ParseError";
    case errc::io_error: return "IoError";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (and the CLI exit-code mapping) can dispatch without string matching.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace colortrigger
