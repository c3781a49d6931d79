#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "colortrigger/feature_io.hpp"
#include "colortrigger/stream_engine.hpp"
#include "colortrigger/trace_io.hpp"

namespace colortrigger::cli {
namespace {

struct EngineFlags {
  std::string input;
  std::string format = "binary";
  EngineConfig cfg;
  std::string boundaries_path;
  std::size_t k = 2;
};

void add_engine_flags(CLI::App& cmd, EngineFlags& f) {
  cmd.add_option("--input", f.input, "Feature stream (CTFS binary or JSONL)")->required();
  cmd.add_option("--format", f.format, "Input format")->check(CLI::IsMember({"binary", "jsonl"}));
  cmd.add_option("--window", f.cfg.window, "Causal window size W");
  cmd.add_option("--theta", f.cfg.theta, "Score threshold");
  cmd.add_option("--rate", f.cfg.rate, "Target color rate r per frame");
  cmd.add_option("--credit-cap", f.cfg.credit_cap, "Credit capacity C");
  cmd.add_option("--lookahead", f.cfg.lookahead, "Lookahead L (0 disables)");
  cmd.add_option("--lambda", f.cfg.lambda, "QP scale");
  cmd.add_option("--tg", f.cfg.gray_tokens, "Tokens per gray frame");
  cmd.add_option("--tc", f.cfg.color_tokens, "Tokens per color frame");
  cmd.add_option("--qp-tol", f.cfg.qp_tolerance, "QP residual tolerance");
  cmd.add_option("--qp-max-iter", f.cfg.qp_max_iter, "QP iteration cap");
  cmd.add_option("--boundaries", f.boundaries_path, "JSON array of ground-truth scene boundaries");
  cmd.add_option("--k", f.k, "Boundary tolerance in frames for recall");
}

std::vector<Timestep> read_boundaries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::io_error, "cannot open '" + path + "'");
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw error(errc::parse_error, path + ": expected a JSON array");
  std::vector<Timestep> out;
  for (const auto& x : j) {
    if (!x.is_number_unsigned()) throw error(errc::parse_error, path + ": boundaries must be non-negative integers");
    out.push_back(x.get<Timestep>());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw error(errc::io_error, "cannot open '" + path + "' for writing");
  out << body;
  if (!out.flush()) throw error(errc::io_error, "write failed for '" + path + "'");
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string summary_line(const RunReport& r) {
  std::ostringstream s;
  s << "T=" << r.frames << " rgb_ratio=" << fixed(r.rgb_ratio) << " token_ratio=" << fixed(r.token_ratio)
    << " budget_bound_ok=" << (r.budget_bound_ok ? "true" : "false");
  if (r.boundary && r.boundary->recall) s << " recall@" << r.boundary->k << "=" << fixed(*r.boundary->recall);
  return s.str();
}

int cmd_run(const EngineFlags& f, const std::string& trace_out, const std::string& report_out,
            std::ostream& out, std::ostream& err) {
  f.cfg.validate();
  const FeatureStream stream = read_features(f.input, parse_feature_format(f.format));
  std::optional<std::vector<Timestep>> boundaries;
  if (!f.boundaries_path.empty()) boundaries = read_boundaries(f.boundaries_path);

  std::optional<std::span<const Timestep>> bspan;
  if (boundaries) bspan = std::span<const Timestep>(*boundaries);
  const RunResult result = run(stream.frames, f.cfg, bspan, f.k);

  if (result.report.qp_nonconverged > 0) {
    err << "warning: QP residual above tolerance on " << result.report.qp_nonconverged << " frame(s)\n";
  }
  if (!trace_out.empty()) {
    std::ostringstream body;
    write_trace(body, result.trace, result.report, f.cfg);
    write_text(trace_out, body.str());
  }
  if (!report_out.empty()) write_text(report_out, to_json(result.report).dump(2) + "\n");
  out << summary_line(result.report) << "\n";
  return kExitOk;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if ((c == ',' && depth == 0) || c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int cmd_compare(const EngineFlags& f, const std::vector<std::string>& policy_args,
                std::optional<double> uniform_p, const std::string& json_out, std::ostream& out,
                std::ostream& err) {
  f.cfg.validate();
  std::vector<std::string> names;
  for (const auto& a : policy_args) {
    for (auto& s : split_list(a)) names.push_back(s);
  }
  if (names.empty()) throw error(errc::invalid_config, "no policies given");
  // Parse up front so flag errors surface before any work is done.
  for (const auto& n : names) {
    if (n != "uniform") Policy::parse(n);
  }

  const FeatureStream stream = read_features(f.input, parse_feature_format(f.format));
  std::optional<std::vector<Timestep>> boundaries;
  if (!f.boundaries_path.empty()) boundaries = read_boundaries(f.boundaries_path);
  std::optional<std::span<const Timestep>> bspan;
  if (boundaries) bspan = std::span<const Timestep>(*boundaries);

  // A bare "uniform" is matched to the trigger's achieved color rate unless
  // --uniform-p is given.
  std::optional<RunResult> trigger_run;
  auto trigger_result = [&]() -> const RunResult& {
    if (!trigger_run) trigger_run = run(stream.frames, f.cfg, bspan, f.k);
    return *trigger_run;
  };

  std::vector<RunReport> reports;
  for (const auto& n : names) {
    Policy p;
    if (n == "uniform") {
      p = Policy::uniform(uniform_p ? *uniform_p : trigger_result().report.rgb_ratio);
    } else {
      p = Policy::parse(n);
    }
    if (p.kind == Policy::Kind::colortrigger) {
      reports.push_back(trigger_result().report);
    } else {
      reports.push_back(run_policy(stream.frames, p, f.cfg, bspan, f.k).report);
    }
    if (reports.back().qp_nonconverged > 0) {
      err << "warning: " << reports.back().policy << ": QP residual above tolerance on "
          << reports.back().qp_nonconverged << " frame(s)\n";
    }
  }

  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.policy.size());
  out << std::left << std::setw(static_cast<int>(width)) << "policy"
      << "  rgb_count  rgb_ratio  token_ratio  recall  budget_ok\n";
  for (const auto& r : reports) {
    std::string recall = "-";
    if (r.boundary && r.boundary->recall) recall = fixed(*r.boundary->recall, 3);
    out << std::left << std::setw(static_cast<int>(width)) << r.policy << "  " << std::right << std::setw(9)
        << r.rgb_count << "  " << std::setw(9) << fixed(r.rgb_ratio) << "  " << std::setw(11)
        << fixed(r.token_ratio) << "  " << std::setw(6) << recall << "  " << std::setw(9)
        << (r.budget_bound_ok ? "true" : "false") << "\n";
  }

  if (!json_out.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : reports) j.push_back(to_json(r));
    write_text(json_out, nlohmann::json{{"policies", j}, {"config", to_json(f.cfg)}}.dump(2) + "\n");
  }
  return kExitOk;
}

struct SynthFlags {
  SceneSpec spec;
  std::string out;
  std::string boundaries_out;
  std::string format = "binary";
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  const SyntheticStream syn = synth_scenes(f.spec);
  const auto bytes = write_features(syn.stream, f.out, parse_feature_format(f.format));
  if (!f.boundaries_out.empty()) write_text(f.boundaries_out, nlohmann::json(syn.boundaries).dump() + "\n");
  out << "wrote " << syn.stream.frames.size() << " frames (d=" << syn.stream.dim << ", " << bytes
      << " bytes) to " << f.out << "; boundaries " << nlohmann::json(syn.boundaries).dump() << "\n";
  return kExitOk;
}

int cmd_inspect(const std::string& trace_path, const std::string& plot_out, std::ostream& out) {
  std::ifstream in(trace_path);
  if (!in) throw error(errc::io_error, "cannot open '" + trace_path + "'");
  const ParsedTrace trace = parse_trace(in);
  const auto& recs = trace.records;
  const auto& rep = trace.report;

  double score_sum = 0.0, score_max = 0.0, min_balance = 0.0, max_balance = 0.0;
  std::size_t iter_sum = 0, iter_max = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    score_sum += r.score;
    score_max = std::max(score_max, r.score);
    min_balance = i == 0 ? r.balance_before : std::min(min_balance, r.balance_before);
    max_balance = i == 0 ? r.balance_before : std::max(max_balance, r.balance_before);
    iter_sum += r.qp_iterations;
    iter_max = std::max(iter_max, r.qp_iterations);
  }
  const double n = recs.empty() ? 1.0 : static_cast<double>(recs.size());
  out << "policy           " << rep.policy << "\n"
      << "frames           " << rep.frames << "\n"
      << "color frames     " << rep.rgb_count << " (" << fixed(100.0 * rep.rgb_ratio, 1) << "%)\n"
      << "tokens           " << rep.token_total << " / " << rep.token_uniform_total << " ("
      << fixed(100.0 * rep.token_ratio, 1) << "%)\n"
      << "budget bound     " << (rep.budget_bound_ok ? "ok" : "VIOLATED") << " (limit "
      << fixed(rep.budget_limit, 2) << ")\n"
      << "score mean/max   " << fixed(score_sum / n) << " / " << fixed(score_max) << "\n"
      << "credit min/max   " << fixed(min_balance) << " / " << fixed(max_balance) << "\n"
      << "qp iters mean/max " << fixed(static_cast<double>(iter_sum) / n, 1) << " / " << iter_max << "\n"
      << "qp nonconverged  " << rep.qp_nonconverged << "\n";
  if (rep.boundary) {
    const auto& b = *rep.boundary;
    auto opt = [](const std::optional<double>& v) { return v ? fixed(*v, 3) : std::string("-"); };
    out << "boundaries       " << b.boundary_count << " (k=" << b.k << ") recall " << opt(b.recall)
        << " precision " << opt(b.precision) << " concentration " << opt(b.concentration) << "\n";
  }
  if (!plot_out.empty()) {
    const double cap = trace.config ? trace.config->credit_cap : 2.0;
    std::optional<double> theta;
    if (trace.config) theta = trace.config->theta;
    write_text(plot_out, render_trace_svg(recs, theta, cap));
    out << "plot written to " << plot_out << "\n";
  }
  return kExitOk;
}

int exit_code_for(errc code) {
  switch (code) {
    case errc::invalid_config:
    case errc::infeasible_budget:
      return kExitUsage;
    default:
      return kExitData;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Causal color-frame trigger over grayscale feature streams"};
  app.name("colortrigger");
  app.require_subcommand(1);

  EngineFlags run_flags;
  std::string trace_out, report_out;
  auto* run_cmd = app.add_subcommand("run", "Run the trigger over a feature stream");
  add_engine_flags(*run_cmd, run_flags);
  run_cmd->add_option("--trace-out", trace_out, "Write the JSONL trace here");
  run_cmd->add_option("--report-out", report_out, "Write the JSON report here");

  EngineFlags cmp_flags;
  std::vector<std::string> policies{"never", "uniform", "colortrigger", "always"};
  std::optional<double> uniform_p;
  std::string json_out;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare acquisition policies on one stream");
  add_engine_flags(*cmp_cmd, cmp_flags);
  cmp_cmd->add_option("--policies", policies,
                      "Policies: always, never, colortrigger, uniform, uniform(p)")
      ->delimiter(',');
  cmp_cmd->add_option("--uniform-p", uniform_p, "Rate for a bare 'uniform' (default: match colortrigger)");
  cmp_cmd->add_option("--json-out", json_out, "Write the combined JSON table here");

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-scene feature stream");
  synth_cmd->add_option("--scenes", synth.spec.num_scenes, "Number of scenes");
  synth_cmd->add_option("--frames-per-scene", synth.spec.frames_per_scene, "Frames per scene");
  synth_cmd->add_option("--dim", synth.spec.dim, "Feature dimension");
  synth_cmd->add_option("--sigma", synth.spec.noise_sigma, "Per-component noise standard deviation");
  synth_cmd->add_option("--seed", synth.spec.seed, "RNG seed");
  synth_cmd->add_option("--out", synth.out, "Output feature file")->required();
  synth_cmd->add_option("--boundaries-out", synth.boundaries_out, "Output boundary list (JSON array)");
  synth_cmd->add_option("--format", synth.format, "Output format")->check(CLI::IsMember({"binary", "jsonl"}));

  std::string inspect_trace, plot_out;
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a trace file");
  inspect_cmd->add_option("--trace", inspect_trace, "Trace JSONL from `run --trace-out`")->required();
  inspect_cmd->add_option("--plot-out", plot_out, "Write an SVG timeline here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run_flags, trace_out, report_out, out, err);
    if (*cmp_cmd) return cmd_compare(cmp_flags, policies, uniform_p, json_out, out, err);
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*inspect_cmd) return cmd_inspect(inspect_trace, plot_out, out);
  } catch (const error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace colortrigger::cli
