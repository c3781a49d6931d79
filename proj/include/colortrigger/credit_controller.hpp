#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>

#include "colortrigger/errors.hpp"

namespace colortrigger {

// Credits are held in fixed point. Summing a decimal rate such as 0.1 in
// binary floating point drifts (ten additions land just under 1.0), which
// would delay triggers by a frame per cycle; integer units keep the bucket
// exact at a resolution far below anything the controller distinguishes.
inline constexpr std::int64_t kUnitsPerCredit = 1'000'000'000;

inline std::int64_t to_credit_units(double credits) {
  return static_cast<std::int64_t>(std::llround(credits * static_cast<double>(kUnitsPerCredit)));
}

inline double from_credit_units(std::int64_t units) noexcept {
  return static_cast<double>(units) / static_cast<double>(kUnitsPerCredit);
}

struct CreditParams {
  double rate = 0.1;           // credits earned per frame, in (0, 1]
  double cap = 2.0;            // capacity C >= 1
  std::size_t lookahead = 10;  // frames of future accrual folded into the budget map
  double theta = 0.3;          // score threshold in [0, 1]

  void validate() const {
    if (!(rate > 0.0 && rate <= 1.0) || to_credit_units(rate) < 1) {
      throw error(errc::invalid_config, "rate must lie in (0, 1], got " + std::to_string(rate));
    }
    if (!(cap >= 1.0) || !std::isfinite(cap) || cap > 1e6) {
      throw error(errc::invalid_config, "credit cap must lie in [1, 1e6], got " + std::to_string(cap));
    }
    if (!(theta >= 0.0 && theta <= 1.0)) {
      throw error(errc::invalid_config, "theta must lie in [0, 1], got " + std::to_string(theta));
    }
    if (lookahead > 1'000'000) {
      throw error(errc::invalid_config, "lookahead too large: " + std::to_string(lookahead));
    }
  }
};

/// Credit balance b in [0, C] plus the parameters that govern it.
class CreditState {
 public:
  /// Full bucket, b = C.
  static CreditState initial(const CreditParams& params) {
    return with_balance(params, params.cap);
  }

  static CreditState with_balance(const CreditParams& params, double balance) {
    params.validate();
    CreditState s;
    s.params_ = params;
    s.rate_units_ = to_credit_units(params.rate);
    s.cap_units_ = to_credit_units(params.cap);
    if (!(balance >= 0.0 && balance <= params.cap)) {
      throw error(errc::invalid_config, "balance " + std::to_string(balance) + " outside [0, C]");
    }
    s.units_ = to_credit_units(balance);
    return s;
  }

  const CreditParams& params() const noexcept { return params_; }
  double balance() const noexcept { return from_credit_units(units_); }
  std::int64_t balance_units() const noexcept { return units_; }
  std::int64_t rate_units() const noexcept { return rate_units_; }
  std::int64_t cap_units() const noexcept { return cap_units_; }

  /// m = min(n, floor(b + r * L)); with L = 0 this is min(n, floor(b)).
  double pseudo_budget(std::size_t window_size) const noexcept {
    const std::int64_t credits =
        units_ + rate_units_ * static_cast<std::int64_t>(params_.lookahead);
    const std::int64_t whole = credits / kUnitsPerCredit;
    return static_cast<double>(std::min<std::int64_t>(static_cast<std::int64_t>(window_size), whole));
  }

  /// Fires iff s >= theta and b >= 1, both inclusive.
  bool decide(double score) const noexcept {
    return score >= params_.theta && units_ >= kUnitsPerCredit;
  }

  /// b' = clip(b - u + r, 0, C).
  CreditState updated(bool trigger) const noexcept {
    CreditState next = *this;
    const std::int64_t raw = units_ - (trigger ? kUnitsPerCredit : 0) + rate_units_;
    next.units_ = std::clamp<std::int64_t>(raw, 0, cap_units_);
    return next;
  }

  friend bool operator==(const CreditState& a, const CreditState& b) noexcept {
    return a.units_ == b.units_ && a.rate_units_ == b.rate_units_ && a.cap_units_ == b.cap_units_ &&
           a.params_.lookahead == b.params_.lookahead && a.params_.theta == b.params_.theta;
  }

 private:
  CreditState() = default;

  CreditParams params_;
  std::int64_t units_ = 0;
  std::int64_t rate_units_ = 0;
  std::int64_t cap_units_ = 0;
};

struct TriggerDecision {
  bool trigger = false;
  double score = 0.0;
  double budget = 0.0;
  double balance_before = 0.0;
  double balance_after = 0.0;
};

inline double pseudo_budget(const CreditState& state, std::size_t window_size) noexcept {
  return state.pseudo_budget(window_size);
}

inline bool decide(const CreditState& state, double score) noexcept { return state.decide(score); }

inline CreditState update_credit(const CreditState& state, bool trigger) noexcept {
  return state.updated(trigger);
}

}  // namespace colortrigger
