#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "colortrigger/credit_controller.hpp"
#include "colortrigger/errors.hpp"
#include "colortrigger/qp_diversity.hpp"
#include "colortrigger/token_router.hpp"
#include "colortrigger/window_affinity.hpp"

namespace colortrigger {

struct EngineConfig {
  std::size_t window = 30;
  double theta = 0.3;
  double rate = 0.1;
  double credit_cap = 2.0;
  std::size_t lookahead = 10;
  double lambda = 1.0;
  std::uint32_t gray_tokens = 64;
  std::uint32_t color_tokens = 256;
  double qp_tolerance = 1e-6;
  std::size_t qp_max_iter = 10000;
  std::uint64_t seed = 0;  // only consumed by stochastic tooling, never by the engine

  CreditParams credit_params() const { return {rate, credit_cap, lookahead, theta}; }
  RouteConfig route_config() const { return {gray_tokens, color_tokens}; }
  QpOptions qp_options() const { return {qp_tolerance, qp_max_iter}; }

  void validate() const {
    if (window < 1) throw error(errc::invalid_config, "window must be >= 1");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw error(errc::invalid_config, "lambda must be positive");
    }
    if (!(qp_tolerance > 0.0)) throw error(errc::invalid_config, "qp tolerance must be positive");
    credit_params().validate();
    route_config().validate();
  }
};

/// One iteration of the trigger loop, as observed from outside.
struct StepRecord {
  Timestep t = 0;
  double score = 0.0;
  double budget = 0.0;
  double balance_before = 0.0;
  double balance_after = 0.0;
  bool trigger = false;
  Modality modality = Modality::gray;
  std::uint32_t tokens = 0;
  std::size_t qp_iterations = 0;
  double qp_residual = 0.0;
  bool qp_converged = true;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// Frame-by-frame trigger: window -> affinity -> pseudo-budget -> QP score ->
/// gate -> route -> credit update. Strictly causal; one instance per stream.
class TriggerEngine {
 public:
  explicit TriggerEngine(const EngineConfig& cfg)
      : cfg_(validated(cfg)),
        window_(cfg.window),
        credit_(CreditState::initial(cfg.credit_params())),
        route_(cfg.route_config()) {}

  /// Advances by one frame. Input is normalized here; a rejected frame
  /// (ZeroVector, NonMonotonicTimestep, DimensionMismatch) leaves the engine
  /// untouched.
  StepRecord step(const FrameFeature& feat) {
    window_.push(FrameFeature{feat.t, normalize_feature(feat.f)});

    const AffinityMatrix affinity = window_.affinity();
    const double budget = credit_.pseudo_budget(window_.size());
    const QpSolution sol = score_window(affinity, budget, cfg_.lambda, cfg_.qp_options());
    const double score = current_score(sol);
    const bool trigger = credit_.decide(score);
    const TokenBlock block = route(trigger, route_, feat.t);
    const CreditState next = credit_.updated(trigger);

    StepRecord rec;
    rec.t = feat.t;
    rec.score = score;
    rec.budget = budget;
    rec.balance_before = credit_.balance();
    rec.balance_after = next.balance();
    rec.trigger = trigger;
    rec.modality = block.modality;
    rec.tokens = block.tokens;
    rec.qp_iterations = sol.iterations;
    rec.qp_residual = sol.kkt_residual;
    rec.qp_converged = sol.converged;

    credit_ = next;
    return rec;
  }

  const EngineConfig& config() const noexcept { return cfg_; }
  const AffinityWindow& window() const noexcept { return window_; }
  const CreditState& credit() const noexcept { return credit_; }

 private:
  static const EngineConfig& validated(const EngineConfig& cfg) {
    cfg.validate();
    return cfg;
  }

  EngineConfig cfg_;
  AffinityWindow window_;
  CreditState credit_;
  RouteConfig route_;
};

// ---------------------------------------------------------------------------
// Policies

struct Policy {
  enum class Kind { always, never, uniform, colortrigger };

  Kind kind = Kind::colortrigger;
  double p = 0.0;  // uniform only

  static Policy always() { return {Kind::always, 1.0}; }
  static Policy never() { return {Kind::never, 0.0}; }
  static Policy uniform(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw error(errc::invalid_config, "uniform rate must lie in [0, 1], got " + std::to_string(p));
    }
    return {Kind::uniform, p};
  }
  static Policy colortrigger() { return {Kind::colortrigger, 0.0}; }

  std::string name() const {
    switch (kind) {
      case Kind::always: return "always";
      case Kind::never: return "never";
      case Kind::uniform: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "uniform(%g)", p);
        return buf;
      }
      case Kind::colortrigger: return "colortrigger";
    }
    return "unknown";
  }

  /// Accepts "always", "never", "colortrigger", "uniform(p)" and "uniform:p".
  /// A bare "uniform" takes its rate from `default_p`.
  static Policy parse(std::string_view text, std::optional<double> default_p = std::nullopt) {
    if (text == "always") return always();
    if (text == "never") return never();
    if (text == "colortrigger") return colortrigger();
    if (text.starts_with("uniform")) {
      std::string_view rest = text.substr(7);
      if (rest.empty()) {
        if (!default_p) throw error(errc::invalid_config, "uniform policy needs a rate");
        return uniform(*default_p);
      }
      if (rest.front() == ':') {
        rest.remove_prefix(1);
      } else if (rest.front() == '(' && rest.back() == ')') {
        rest = rest.substr(1, rest.size() - 2);
      } else {
        throw error(errc::invalid_config, "malformed policy '" + std::string(text) + "'");
      }
      const std::string num(rest);
      char* end = nullptr;
      const double p = std::strtod(num.c_str(), &end);
      if (num.empty() || end != num.c_str() + num.size()) {
        throw error(errc::invalid_config, "malformed uniform rate '" + num + "'");
      }
      return uniform(p);
    }
    throw error(errc::invalid_config, "unknown policy '" + std::string(text) + "'");
  }
};

/// Indices of a centered uniform stride: floor((j + 1/2) * T / N) for
/// j = 0..N-1, with N = floor(p * T). The 1e-9 guard keeps p = N / T from
/// rounding down to N - 1.
inline std::vector<std::size_t> uniform_trigger_indices(std::size_t frames, double p) {
  const auto count = static_cast<std::size_t>(std::floor(p * static_cast<double>(frames) + 1e-9));
  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) out.push_back(((2 * j + 1) * frames) / (2 * count));
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct BoundaryMetrics {
  std::size_t k = 0;
  std::size_t boundary_count = 0;
  std::optional<double> recall;         // absent without ground-truth boundaries
  std::optional<double> precision;      // share of triggers within k after a boundary
  std::optional<double> concentration;  // trigger rate near boundaries / elsewhere; may be +inf
};

struct RunReport {
  std::string policy = "colortrigger";
  std::size_t frames = 0;
  std::size_t rgb_count = 0;
  double rgb_ratio = 0.0;
  std::uint64_t token_total = 0;
  std::uint64_t token_uniform_total = 0;
  double token_ratio = 0.0;
  double budget_limit = 0.0;  // r * T + C
  bool budget_bound_ok = true;
  std::vector<Timestep> trigger_timestamps;
  std::optional<BoundaryMetrics> boundary;
  std::size_t qp_nonconverged = 0;
  double wall_time_seconds = 0.0;
};

inline BoundaryMetrics boundary_metrics(std::span<const StepRecord> trace,
                                        std::span<const Timestep> boundaries, std::size_t k) {
  BoundaryMetrics bm;
  bm.k = k;
  bm.boundary_count = boundaries.size();

  std::vector<Timestep> triggers;
  for (const auto& r : trace) {
    if (r.trigger) triggers.push_back(r.t);
  }
  auto near_boundary = [&](Timestep t) {
    return std::any_of(boundaries.begin(), boundaries.end(),
                       [&](Timestep b) { return t >= b && t - b <= k; });
  };

  if (!boundaries.empty()) {
    std::size_t hit = 0;
    for (Timestep b : boundaries) {
      const bool any = std::any_of(triggers.begin(), triggers.end(),
                                   [&](Timestep t) { return t >= b && t - b <= k; });
      hit += any ? 1 : 0;
    }
    bm.recall = static_cast<double>(hit) / static_cast<double>(boundaries.size());
  }

  std::size_t near_frames = 0, near_triggers = 0, far_frames = 0, far_triggers = 0;
  for (const auto& r : trace) {
    if (near_boundary(r.t)) {
      ++near_frames;
      near_triggers += r.trigger ? 1 : 0;
    } else {
      ++far_frames;
      far_triggers += r.trigger ? 1 : 0;
    }
  }
  if (!triggers.empty() && !boundaries.empty()) {
    bm.precision = static_cast<double>(near_triggers) / static_cast<double>(triggers.size());
  }
  if (near_frames > 0 && far_frames > 0) {
    const double near_rate = static_cast<double>(near_triggers) / static_cast<double>(near_frames);
    const double far_rate = static_cast<double>(far_triggers) / static_cast<double>(far_frames);
    if (far_rate > 0.0) {
      bm.concentration = near_rate / far_rate;
    } else if (near_rate > 0.0) {
      bm.concentration = std::numeric_limits<double>::infinity();
    }
  }
  return bm;
}

/// Aggregates a finished trace. Pure post-pass; wall time is left at zero.
inline RunReport compute_metrics(std::span<const StepRecord> trace, const EngineConfig& cfg,
                                 std::optional<std::span<const Timestep>> boundaries = std::nullopt,
                                 std::size_t k = 2) {
  RunReport rep;
  rep.frames = trace.size();
  for (const auto& r : trace) {
    rep.token_total += r.tokens;
    if (r.trigger) {
      ++rep.rgb_count;
      rep.trigger_timestamps.push_back(r.t);
    }
    if (!r.qp_converged) ++rep.qp_nonconverged;
  }
  const double frames = static_cast<double>(rep.frames);
  rep.rgb_ratio = rep.frames == 0 ? 0.0 : static_cast<double>(rep.rgb_count) / frames;
  rep.token_uniform_total = static_cast<std::uint64_t>(rep.frames) * cfg.color_tokens;
  rep.token_ratio = rep.token_uniform_total == 0
                        ? 0.0
                        : static_cast<double>(rep.token_total) / static_cast<double>(rep.token_uniform_total);
  rep.budget_limit = cfg.rate * frames + cfg.credit_cap;
  rep.budget_bound_ok = static_cast<double>(rep.rgb_count) <= rep.budget_limit;
  if (boundaries) rep.boundary = boundary_metrics(trace, *boundaries, k);
  return rep;
}

// ---------------------------------------------------------------------------
// Runs

struct RunResult {
  std::vector<StepRecord> trace;
  RunReport report;
};

/// Runs `policy` over the stream. Baseline policies never consult the trigger
/// (their records carry zero score, budget and balance) but reject malformed
/// input exactly as the trigger engine does.
inline RunResult run_policy(std::span<const FrameFeature> features, const Policy& policy,
                            const EngineConfig& cfg,
                            std::optional<std::span<const Timestep>> boundaries = std::nullopt,
                            std::size_t k = 2) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  RunResult out;
  out.trace.reserve(features.size());

  if (policy.kind == Policy::Kind::colortrigger) {
    TriggerEngine engine(cfg);
    for (const auto& f : features) out.trace.push_back(engine.step(f));
  } else {
    std::vector<std::uint8_t> chosen(features.size(), policy.kind == Policy::Kind::always ? 1 : 0);
    if (policy.kind == Policy::Kind::uniform) {
      for (std::size_t i : uniform_trigger_indices(features.size(), policy.p)) chosen[i] = 1;
    }
    const RouteConfig rc = cfg.route_config();
    AffinityWindow validator(1);
    for (std::size_t i = 0; i < features.size(); ++i) {
      validator.push(FrameFeature{features[i].t, normalize_feature(features[i].f)});
      const TokenBlock block = route(chosen[i] != 0, rc, features[i].t);
      StepRecord rec;
      rec.t = features[i].t;
      rec.trigger = chosen[i] != 0;
      rec.modality = block.modality;
      rec.tokens = block.tokens;
      out.trace.push_back(rec);
    }
  }

  out.report = compute_metrics(out.trace, cfg, boundaries, k);
  out.report.policy = policy.name();
  out.report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline RunResult run(std::span<const FrameFeature> features, const EngineConfig& cfg,
                     std::optional<std::span<const Timestep>> boundaries = std::nullopt,
                     std::size_t k = 2) {
  return run_policy(features, Policy::colortrigger(), cfg, boundaries, k);
}

}  // namespace colortrigger
