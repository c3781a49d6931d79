#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "colortrigger/errors.hpp"
#include "colortrigger/window_affinity.hpp"

namespace colortrigger {

enum class Modality : std::uint8_t { gray, color };

constexpr std::string_view to_string(Modality m) noexcept {
  return m == Modality::color ? "color" : "gray";
}

inline Modality parse_modality(std::string_view s) {
  if (s == "gray") return Modality::gray;
  if (s == "color") return Modality::color;
  throw error(errc::parse_error, "unknown modality '" + std::string(s) + "'");
}

struct RouteConfig {
  std::uint32_t gray_tokens = 64;
  std::uint32_t color_tokens = 256;

  void validate() const {
    if (gray_tokens < 1 || color_tokens <= gray_tokens) {
      throw error(errc::invalid_config, "token counts must satisfy T_c > T_g >= 1 (got T_g=" +
                                            std::to_string(gray_tokens) +
                                            ", T_c=" + std::to_string(color_tokens) + ")");
    }
  }
};

struct TokenBlock {
  Timestep t = 0;
  Modality modality = Modality::gray;
  std::uint32_t tokens = 0;

  friend bool operator==(const TokenBlock&, const TokenBlock&) = default;
};

inline TokenBlock route(bool trigger, const RouteConfig& cfg, Timestep t = 0) noexcept {
  return trigger ? TokenBlock{t, Modality::color, cfg.color_tokens}
                 : TokenBlock{t, Modality::gray, cfg.gray_tokens};
}

/// Ordered token blocks plus decoder-side cost against an all-color baseline.
class TokenLedger {
 public:
  explicit TokenLedger(RouteConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const TokenBlock& append(Timestep t, bool trigger) {
    blocks_.push_back(route(trigger, cfg_, t));
    total_ += blocks_.back().tokens;
    return blocks_.back();
  }

  const RouteConfig& config() const noexcept { return cfg_; }
  const std::vector<TokenBlock>& blocks() const noexcept { return blocks_; }
  std::size_t frames() const noexcept { return blocks_.size(); }
  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t uniform_total() const noexcept {
    return static_cast<std::uint64_t>(blocks_.size()) * cfg_.color_tokens;
  }
  /// total / (T * T_c); 0 for an empty ledger.
  double ratio() const noexcept {
    const auto denom = uniform_total();
    return denom == 0 ? 0.0 : static_cast<double>(total_) / static_cast<double>(denom);
  }

 private:
  RouteConfig cfg_;
  std::vector<TokenBlock> blocks_;
  std::uint64_t total_ = 0;
};

/// Ledger for a decision sequence (nonzero = color), timesteps 0..T-1.
inline TokenLedger sequence_cost(std::span<const std::uint8_t> decisions, const RouteConfig& cfg) {
  TokenLedger ledger(cfg);
  for (std::size_t i = 0; i < decisions.size(); ++i) ledger.append(i, decisions[i] != 0);
  return ledger;
}

/// Closed form of the ledger ratio for a color fraction rho:
/// (1 - rho) * T_g / T_c + rho.
inline double token_ratio_for_rate(double rho, const RouteConfig& cfg) noexcept {
  return (1.0 - rho) * static_cast<double>(cfg.gray_tokens) / static_cast<double>(cfg.color_tokens) + rho;
}

}  // namespace colortrigger
