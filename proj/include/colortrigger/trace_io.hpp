#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "colortrigger/errors.hpp"
#include "colortrigger/stream_engine.hpp"

namespace colortrigger {

// Trace files are JSONL: one StepRecord object per frame, then a single
// {"report": {...}, "config": {...}} line.

inline nlohmann::json to_json(const StepRecord& r) {
  return {{"t", r.t},
          {"s", r.score},
          {"m", r.budget},
          {"b_before", r.balance_before},
          {"b_after", r.balance_after},
          {"u", r.trigger ? 1 : 0},
          {"modality", std::string(to_string(r.modality))},
          {"tokens", r.tokens},
          {"qp_iters", r.qp_iterations},
          {"qp_residual", r.qp_residual}};
}

namespace detail {

inline nlohmann::json optional_number(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return *v;
}

inline std::optional<double> read_optional_number(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw error(errc::parse_error, "unexpected string '" + s + "' for a number");
  }
  return j.get<double>();
}

template <typename T>
T field(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw error(errc::parse_error, std::string("missing key \"") + key + "\"");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::parse_error, std::string("bad value for \"") + key + "\": " + e.what());
  }
}

}  // namespace detail

inline StepRecord step_record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw error(errc::parse_error, "step record is not an object");
  StepRecord r;
  r.t = detail::field<Timestep>(j, "t");
  r.score = detail::field<double>(j, "s");
  r.budget = detail::field<double>(j, "m");
  r.balance_before = detail::field<double>(j, "b_before");
  r.balance_after = detail::field<double>(j, "b_after");
  const int u = detail::field<int>(j, "u");
  if (u != 0 && u != 1) throw error(errc::parse_error, "\"u\" must be 0 or 1");
  r.trigger = u == 1;
  r.modality = parse_modality(detail::field<std::string>(j, "modality"));
  r.tokens = detail::field<std::uint32_t>(j, "tokens");
  r.qp_iterations = detail::field<std::size_t>(j, "qp_iters");
  r.qp_residual = detail::field<double>(j, "qp_residual");
  return r;
}

inline nlohmann::json to_json(const BoundaryMetrics& b) {
  return {{"k", b.k},
          {"boundary_count", b.boundary_count},
          {"recall", detail::optional_number(b.recall)},
          {"precision", detail::optional_number(b.precision)},
          {"concentration", detail::optional_number(b.concentration)}};
}

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j = {{"policy", r.policy},
                      {"T", r.frames},
                      {"rgb_count", r.rgb_count},
                      {"rgb_ratio", r.rgb_ratio},
                      {"tokens",
                       {{"total", r.token_total},
                        {"uniform_total", r.token_uniform_total},
                        {"ratio", r.token_ratio}}},
                      {"budget_limit", r.budget_limit},
                      {"budget_bound_ok", r.budget_bound_ok},
                      {"trigger_timestamps", r.trigger_timestamps},
                      {"qp_nonconverged", r.qp_nonconverged},
                      {"wall_time", r.wall_time_seconds}};
  if (r.boundary) j["boundary"] = to_json(*r.boundary);
  return j;
}

inline RunReport run_report_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw error(errc::parse_error, "report is not an object");
  RunReport r;
  r.policy = detail::field<std::string>(j, "policy");
  r.frames = detail::field<std::size_t>(j, "T");
  r.rgb_count = detail::field<std::size_t>(j, "rgb_count");
  r.rgb_ratio = detail::field<double>(j, "rgb_ratio");
  const auto tokens = detail::field<nlohmann::json>(j, "tokens");
  r.token_total = detail::field<std::uint64_t>(tokens, "total");
  r.token_uniform_total = detail::field<std::uint64_t>(tokens, "uniform_total");
  r.token_ratio = detail::field<double>(tokens, "ratio");
  r.budget_limit = detail::field<double>(j, "budget_limit");
  r.budget_bound_ok = detail::field<bool>(j, "budget_bound_ok");
  r.trigger_timestamps = detail::field<std::vector<Timestep>>(j, "trigger_timestamps");
  r.qp_nonconverged = detail::field<std::size_t>(j, "qp_nonconverged");
  if (const auto it = j.find("wall_time"); it != j.end()) r.wall_time_seconds = it->get<double>();
  if (const auto it = j.find("boundary"); it != j.end() && !it->is_null()) {
    BoundaryMetrics b;
    b.k = detail::field<std::size_t>(*it, "k");
    b.boundary_count = detail::field<std::size_t>(*it, "boundary_count");
    b.recall = detail::read_optional_number(detail::field<nlohmann::json>(*it, "recall"));
    b.precision = detail::read_optional_number(detail::field<nlohmann::json>(*it, "precision"));
    b.concentration = detail::read_optional_number(detail::field<nlohmann::json>(*it, "concentration"));
    r.boundary = b;
  }
  return r;
}

inline nlohmann::json to_json(const EngineConfig& c) {
  return {{"window", c.window},          {"theta", c.theta},
          {"rate", c.rate},              {"credit_cap", c.credit_cap},
          {"lookahead", c.lookahead},    {"lambda", c.lambda},
          {"tg", c.gray_tokens},         {"tc", c.color_tokens},
          {"qp_tolerance", c.qp_tolerance}, {"qp_max_iter", c.qp_max_iter}};
}

inline std::optional<EngineConfig> engine_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) return std::nullopt;
  EngineConfig c;
  c.window = detail::field<std::size_t>(j, "window");
  c.theta = detail::field<double>(j, "theta");
  c.rate = detail::field<double>(j, "rate");
  c.credit_cap = detail::field<double>(j, "credit_cap");
  c.lookahead = detail::field<std::size_t>(j, "lookahead");
  c.lambda = detail::field<double>(j, "lambda");
  c.gray_tokens = detail::field<std::uint32_t>(j, "tg");
  c.color_tokens = detail::field<std::uint32_t>(j, "tc");
  c.qp_tolerance = detail::field<double>(j, "qp_tolerance");
  c.qp_max_iter = detail::field<std::size_t>(j, "qp_max_iter");
  return c;
}

/// Writes T step lines followed by the report line. Wall time is left out so
/// identical inputs give identical bytes.
inline void write_trace(std::ostream& out, std::span<const StepRecord> trace, const RunReport& report,
                        const EngineConfig& cfg) {
  for (const auto& r : trace) out << to_json(r).dump() << '\n';
  nlohmann::json rep = to_json(report);
  rep.erase("wall_time");
  out << nlohmann::json{{"report", rep}, {"config", to_json(cfg)}}.dump() << '\n';
}

struct ParsedTrace {
  std::vector<StepRecord> records;
  RunReport report;
  std::optional<EngineConfig> config;
};

/// Parses a trace file body. Rejects empty input, a missing or misplaced
/// report line, and a record count that disagrees with the report.
inline ParsedTrace parse_trace(std::istream& in) {
  ParsedTrace out;
  bool have_report = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (have_report) throw error(errc::parse_error, "line " + std::to_string(line_no) + ": data after report");
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw error(errc::parse_error, "line " + std::to_string(line_no) + ": invalid JSON");
    if (j.is_object() && j.contains("report")) {
      out.report = run_report_from_json(j["report"]);
      if (const auto it = j.find("config"); it != j.end()) out.config = engine_config_from_json(*it);
      have_report = true;
    } else {
      out.records.push_back(step_record_from_json(j));
    }
  }
  if (line_no == 0) throw error(errc::parse_error, "empty trace");
  if (!have_report) throw error(errc::parse_error, "trace has no report line");
  if (out.records.size() != out.report.frames) {
    throw error(errc::parse_error, "trace has " + std::to_string(out.records.size()) +
                                       " records but report says T=" + std::to_string(out.report.frames));
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG timeline: score (with threshold), credit balance, and trigger ticks.

inline std::string render_trace_svg(std::span<const StepRecord> trace, std::optional<double> theta,
                                    double credit_cap) {
  const double width = std::max(640.0, 4.0 * static_cast<double>(trace.size()) + 80.0);
  const double left = 60.0, right = 20.0, panel = 120.0, gap = 30.0, top = 30.0;
  const double plot_w = width - left - right;
  const double height = top + 3 * panel + 2 * gap + 40.0;
  const double n = static_cast<double>(std::max<std::size_t>(trace.size(), 2) - 1);
  auto x_at = [&](std::size_t i) { return left + plot_w * static_cast<double>(i) / n; };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  auto panel_frame = [&](double y0, const char* label) {
    svg << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(plot_w) << "\" height=\""
        << fmt(panel) << "\" fill=\"none\" stroke=\"#999\"/>\n";
    svg << "<text x=\"4\" y=\"" << fmt(y0 + panel / 2) << "\">" << label << "</text>\n";
  };
  auto polyline = [&](double y0, double scale, auto value, const char* color) {
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const double v = std::clamp(value(trace[i]) / scale, 0.0, 1.0);
      svg << fmt(x_at(i)) << ',' << fmt(y0 + panel * (1.0 - v)) << ' ';
    }
    svg << "\"/>\n";
  };

  const double y_score = top, y_credit = top + panel + gap, y_trig = top + 2 * (panel + gap);
  panel_frame(y_score, "s_t");
  polyline(y_score, 1.0, [](const StepRecord& r) { return r.score; }, "#1f77b4");
  if (theta) {
    const double y = y_score + panel * (1.0 - std::clamp(*theta, 0.0, 1.0));
    svg << "<line x1=\"" << fmt(left) << "\" x2=\"" << fmt(left + plot_w) << "\" y1=\"" << fmt(y) << "\" y2=\""
        << fmt(y) << "\" stroke=\"#d62728\" stroke-dasharray=\"4 3\"/>\n";
  }
  panel_frame(y_credit, "b_t");
  polyline(y_credit, std::max(credit_cap, 1e-9), [](const StepRecord& r) { return r.balance_before; }, "#2ca02c");
  panel_frame(y_trig, "u_t");
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!trace[i].trigger) continue;
    svg << "<line x1=\"" << fmt(x_at(i)) << "\" x2=\"" << fmt(x_at(i)) << "\" y1=\"" << fmt(y_trig + panel)
        << "\" y2=\"" << fmt(y_trig + 10) << "\" stroke=\"#ff7f0e\"/>\n";
  }
  svg << "<text x=\"" << fmt(left) << "\" y=\"" << fmt(height - 12) << "\">t = "
      << (trace.empty() ? 0 : trace.front().t) << " .. " << (trace.empty() ? 0 : trace.back().t) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace colortrigger
