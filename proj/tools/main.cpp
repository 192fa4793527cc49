#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "meetsync/packager.hpp"
#include "meetsync/pipeline.hpp"

namespace fs = std::filesystem;
using namespace meetsync;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> tolerance_ms;
  std::string method;
};

void log_line(std::string_view msg) { std::cerr << "meetsync: " << msg << '\n'; }

std::optional<FitKind> method_flag(const Flags& f) {
  if (f.method.empty()) return std::nullopt;
  auto kind = parse_fit_kind(f.method);
  if (!kind) throw Error(ErrorKind::configuration, "--method must be least_squares or theil_sen");
  return kind;
}

std::optional<double> tolerance_flag(const Flags& f) {
  if (!f.tolerance_ms) return std::nullopt;
  if (!(*f.tolerance_ms > 0.0)) throw Error(ErrorKind::configuration, "--tolerance-ms must be > 0");
  return *f.tolerance_ms / 1000.0;
}

PipelineConfig resolve_config(const Flags& f) {
  PipelineConfig cfg = f.config.empty() ? PipelineConfig{} : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (auto t = tolerance_flag(f)) cfg.tolerance_s = *t;
  if (auto m = method_flag(f)) cfg.method = *m;
  if (f.out.empty()) throw Error(ErrorKind::configuration, "--out is required");
  cfg.out = f.out;
  return cfg;
}

fs::path root_of(const Flags& f) {
  if (f.out.empty()) throw Error(ErrorKind::configuration, "--out (session root) is required");
  return f.out;
}

int report_verify(const fs::path& root) {
  const auto r = verify_session(root);
  for (const auto& p : r.mismatched) log_line("verify: hash mismatch: " + p);
  for (const auto& p : r.missing) log_line("verify: missing: " + p);
  for (const auto& p : r.unlisted) log_line("verify: not in manifest: " + p);
  log_line(std::string("verify: ") + (r.ok() ? "ok" : "FAILED"));
  return r.ok() ? kExitOk : kExitFatal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synchronize, package and check multimodal group-session recordings"};
  app.require_subcommand(1);
  Flags flags;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Pipeline configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Master seed (overrides the configuration)");
  };
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", flags.out, "Session root")->required(); };
  auto add_fit = [&](CLI::App* sub) {
    sub->add_option("--tolerance-ms", flags.tolerance_ms, "Timing tolerance in milliseconds");
    sub->add_option("--method", flags.method, "Clock fit: theil_sen or least_squares");
  };

  auto* simulate = app.add_subcommand("simulate", "Generate raw streams, anchors and the event spine");
  add_config(simulate);
  add_out(simulate);
  add_fit(simulate);
  auto* align = app.add_subcommand("align", "Fit clock models and write the timing report");
  add_out(align);
  add_fit(align);
  auto* package = app.add_subcommand("package", "Map streams to the session clock and write the tree");
  add_out(package);
  auto* slice = app.add_subcommand("slice", "Write per-task slices");
  add_out(slice);
  auto* qc = app.add_subcommand("qc", "Write the QC report; exit 0 ok, 1 warnings, 2 fatal");
  add_out(qc);
  auto* run = app.add_subcommand("run", "simulate, align, package and qc in one go");
  add_config(run);
  add_out(run);
  add_fit(run);
  auto* verify = app.add_subcommand("verify", "Check every file against the manifest");
  add_out(verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (simulate->parsed()) {
      stage_simulate(resolve_config(flags), log_line);
      return kExitOk;
    }
    if (align->parsed()) {
      const auto report = stage_align(root_of(flags), {tolerance_flag(flags), method_flag(flags)}, log_line);
      return report.all_pass() ? kExitOk : kExitFatal;
    }
    if (package->parsed()) {
      stage_package(root_of(flags), log_line);
      return kExitOk;
    }
    if (slice->parsed()) {
      const auto root = root_of(flags);
      const auto slices = write_slices(root, read_session(root));
      log_line("slice: " + std::to_string(slices.size()) + " task windows");
      return kExitOk;
    }
    if (qc->parsed()) return stage_qc(root_of(flags), log_line).exit_code;
    if (run->parsed()) return run_end_to_end(resolve_config(flags), log_line);
    if (verify->parsed()) return report_verify(root_of(flags));
  } catch (const Error& e) {
    log_line(std::string("error (") + std::string(to_string(e.kind())) + "): " + e.what());
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    log_line(std::string("error (json): ") + e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    log_line(std::string("error: ") + e.what());
    return kExitIo;
  }
  return kExitUsage;
}
