// Acceptance checks: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "meetsync/audio_io.hpp"
#include "meetsync/digest.hpp"
#include "meetsync/error.hpp"
#include "meetsync/packager.hpp"
#include "meetsync/pipeline.hpp"
#include "meetsync/qc.hpp"
#include "meetsync/scenario.hpp"
#include "meetsync/simdev.hpp"
#include "meetsync/syncfit.hpp"
#include "support.hpp"

using namespace meetsync;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int decimals = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  }
  return out;
}

std::map<std::string, std::string> sourcedata_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& [rel, bytes] : tree_bytes(root / "sourcedata")) out[rel] = sha256_hex(bytes);
  return out;
}

// ---------------------------------------------------------------- 1
Outcome scenario_fidelity() {
  const auto t0 = Clock::now();
  const auto s = default_scenario();
  auto events = run_scenario(s, {{"T2.settlement_form", 120.0}}, 0.0);
  auto prompts = schedule_prompts(events, s, PromptPolicy{});
  events.insert(events.end(), prompts.begin(), prompts.end());
  sort_spine(events);
  const auto text = format_events(events);
  const double elapsed = seconds_since(t0);

  const auto golden = read_file(std::string(MEETSYNC_GOLDEN_DIR) + "/default_events.tsv");
  const bool exact = text == golden;

  // Phase rows of the golden spine against the protocol table.
  const std::vector<std::string> expected{
      "T0\tfree_talk\t300.000000",   "T1\treading\t75.000000",     "T1\tdiscussion\t420.000000",
      "T1\tselection\t60.000000",    "T2\tnegotiation\t480.000000", "T2\tsettlement_form\tuntimed",
      "T3\tgeneration\t180.000000",  "T3\tboard_discussion\t420.000000", "T3\tselection\t60.000000",
      "T4\tcontribution\t60.000000", "T4\treveal\t60.000000",       "T4\tdiscussion\t180.000000"};
  std::vector<std::string> found;
  std::istringstream lines(golden);
  for (std::string line; std::getline(lines, line);) {
    std::vector<std::string> f;
    std::istringstream cols(line);
    for (std::string c; std::getline(cols, c, '\t');) f.push_back(c);
    if (f.size() != 8 || f[6] != "phase_start") continue;
    found.push_back(f[2] + "\t" + f[3] + "\t" + (f[7] == "untimed" ? std::string("untimed") : f[1]));
  }
  const bool table = found == expected;
  return {exact && table && elapsed < 1.0,
          std::string("golden ") + (exact ? "identical" : "DIFFERS") + ", " + std::to_string(found.size()) +
              " phase rows " + (table ? "match" : "DO NOT match") + " the table, " + fmt(elapsed * 1000, 1) + " ms"};
}

// ---------------------------------------------------------------- 2, 3
struct TrialResult {
  int within = 0;
  int trials = 0;
};

TrialResult recovery_trials(FitKind kind, const OutlierSpec& outliers, std::uint64_t base_seed) {
  TrialResult r;
  FitMethod method;
  method.kind = kind;
  const auto pulses = pulse_schedule(0.0, 1800.0, 30.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto seed = derive_seed(base_seed, "trial/" + std::to_string(trial));
    Rng rng(seed);
    const GroundTruthClock truth{"dev", rng.uniform(-1.0, 1.0), rng.uniform(-100.0, 100.0), 0.0005,
                                 derive_seed(seed, "clock")};
    auto anchors = emit_anchor_pulses(pulses, std::vector{truth}, SourceTier::lsl);
    if (outliers.fraction > 0.0) {
      FaultSpec spec;
      spec.anchor_outliers = outliers;
      anchors = inject_faults({}, std::move(anchors), spec, derive_seed(seed, "faults"), 1800.0).anchors;
    }
    const auto model = fit_clock_model(anchors, method);
    const bool ok = std::abs(model.offset_s - truth.true_offset_s) <= 0.001 &&
                    std::abs(model.drift_ppm - truth.true_drift_ppm) <= 2.0;
    r.within += ok ? 1 : 0;
    ++r.trials;
  }
  return r;
}

Outcome clock_recovery() {
  const auto t0 = Clock::now();
  const auto ts = recovery_trials(FitKind::theil_sen, {}, 0xC10C);
  const auto ls = recovery_trials(FitKind::least_squares, {}, 0xC10C);
  const double elapsed = seconds_since(t0);
  return {ts.within >= 95 && ls.within >= 95 && elapsed < 10.0,
          "theil_sen " + std::to_string(ts.within) + "/100, least_squares " + std::to_string(ls.within) +
              "/100 within 1 ms / 2 ppm, " + fmt(elapsed, 2) + " s"};
}

Outcome robustness_split() {
  const OutlierSpec outliers{0.10, 0.100};
  const auto ts = recovery_trials(FitKind::theil_sen, outliers, 0x0B5E);
  const auto ls = recovery_trials(FitKind::least_squares, outliers, 0x0B5E);
  const int ls_failed = ls.trials - ls.within;
  return {ts.within >= 95 && ls_failed >= 50,
          "10% anchors +100 ms: theil_sen within bounds " + std::to_string(ts.within) +
              "/100, least_squares outside bounds " + std::to_string(ls_failed) + "/100"};
}

// ---------------------------------------------------------------- 4
Outcome validation_flags() {
  const GroundTruthClock truth{"dev", 0.4, 200.0, 0.0005, 77};
  const auto anchors = emit_anchor_pulses(pulse_schedule(0.0, 1800.0, 30.0), std::vector{truth}, SourceTier::lsl);
  const AnchorPool pool(anchors);

  FitMethod offset_only;
  offset_only.min_anchors_full_model = anchors.size() + 1;
  const auto bad_model = fit_clock_model(anchors, offset_only);
  const auto good_model = fit_clock_model(anchors, FitMethod{});

  const auto bad = validate_session_alignment(std::vector{bad_model}, pool, 0.005);
  const auto good = validate_session_alignment(std::vector{good_model}, pool, 0.005);
  const bool ok = bad_model.drift_ppm == 0.0 && !bad.entries.at(0).pass && good.entries.at(0).pass;
  return {ok, "offset-only rms " + fmt(bad.entries[0].rms_residual_s * 1000, 2) + " ms, max " +
                  fmt(bad.entries[0].max_abs_residual_s * 1000, 1) + " ms (" +
                  (bad.entries[0].pass ? "pass" : "fail") + "); full fit rms " +
                  fmt(good.entries[0].rms_residual_s * 1000, 3) + " ms (" +
                  (good.entries[0].pass ? "pass" : "fail") + ")"};
}

// ---------------------------------------------------------------- session for 5, 6, 9
struct SessionRun {
  fs::path root;
  double seconds = 0.0;
  int exit_code = -1;
  std::size_t records = 0;
  std::map<std::string, std::string> sourcedata_before;
  std::string error;
};

SessionRun run_full_session(const fs::path& root) {
  SessionRun r;
  r.root = root;
  PipelineConfig cfg;
  cfg.seed = 20240611;
  cfg.out = root;
  try {
    const auto t0 = Clock::now();
    stage_simulate(cfg);
    const double sim = seconds_since(t0);
    r.sourcedata_before = sourcedata_hashes(root);
    const auto t1 = Clock::now();
    stage_align(root);
    stage_package(root);
    r.exit_code = stage_qc(root).exit_code;
    r.seconds = sim + seconds_since(t1);
    const auto streams = nlohmann::json::parse(read_file(root / "sourcedata/streams.json"));
    for (const auto& d : streams["streams"]) {
      const auto text = read_file(root / ("sourcedata/streams/" + d["stream_id"].get<std::string>() + ".tsv"));
      r.records += static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) - 1;
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

// ---------------------------------------------------------------- 5
Outcome packaging_round_trip(const SessionRun& run, const testing::TempDir& scratch) {
  if (!run.error.empty()) return {false, "session run failed: " + run.error};
  const auto original = tree_bytes(run.root);
  const auto copy = scratch / "roundtrip";
  write_session(copy, read_session(run.root));
  const bool identical = tree_bytes(copy) == original;

  const std::string target = "sub-P3/physio/sub-P3_physio_physio_P3.tsv";
  auto bytes = read_file(copy / target);
  const auto pos = bytes.size() / 2;
  bytes[pos] = static_cast<char>(bytes[pos] ^ 0x01);
  write_file(copy / target, bytes);
  const auto v = verify_session(copy);
  const bool detected = v.mismatched == std::vector<std::string>{target} && v.missing.empty();

  const bool sourcedata_same = sourcedata_hashes(run.root) == run.sourcedata_before;
  return {identical && detected && sourcedata_same,
          std::string("write/read/write ") + (identical ? "byte-identical" : "DIFFERS") + " over " +
              std::to_string(original.size()) + " files; flipped byte " +
              (detected ? "named " + target : "NOT isolated") + "; sourcedata " +
              (sourcedata_same ? "unchanged (" + std::to_string(run.sourcedata_before.size()) + " files)"
                               : "CHANGED")};
}

// ---------------------------------------------------------------- 6
Outcome slicing(const SessionRun& run) {
  SessionBundle clean;
  clean.scenario = default_scenario();
  clean.events = run_scenario(*clean.scenario, {{"T2.settlement_form", 120.0}}, 0.0);
  const auto desc = default_stack().front();
  const GroundTruthClock perfect{desc.device_id, 0.0, 0.0, 0.0, 1};
  const auto stream = generate_stream(desc, perfect, 0.0, 2415.0, 3);
  clean.streams.emplace(desc.stream_id, BundleStream{desc, stream.samples});
  clean.models[desc.device_id] = identity_model(desc.device_id, SourceTier::lsl, 2);
  canonicalize(clean);

  std::map<std::string, std::pair<double, double>> blocks;
  for (const auto& e : clean.events) {
    if (e.event_type == "block_start") blocks[*e.task].first = e.onset_s;
    if (e.event_type == "block_end") blocks[*e.task].second = e.onset_s;
  }
  bool windows = true, counts = true;
  for (const auto& s : slice_runs(clean)) {
    windows &= blocks.at(s.task_id) == std::make_pair(s.start_auth_s, s.end_auth_s);
    const auto expect = static_cast<std::size_t>(std::llround((s.end_auth_s - s.start_auth_s) * 100.0));
    counts &= s.ranges.at(desc.stream_id).size() == expect;
  }

  // Disjointness on the jittered, fitted session.
  bool disjoint = run.error.empty();
  std::size_t checked = 0;
  if (disjoint) {
    const auto b = read_session(run.root);
    const auto slices = slice_runs(b);
    for (const auto& [id, s] : b.streams) {
      std::vector<int> owner(s.samples.size(), 0);
      for (const auto& sl : slices) {
        const auto it = sl.ranges.find(id);
        if (it == sl.ranges.end()) continue;
        if (it->second.end > s.samples.size()) disjoint = false;
        for (std::size_t i = it->second.begin; i < it->second.end && i < owner.size(); ++i) ++owner[i];
      }
      for (int o : owner) disjoint &= o <= 1;
      ++checked;
    }
  }
  return {windows && counts && disjoint,
          std::string("windows ") + (windows ? "equal block boundaries" : "DIFFER") + ", 100 Hz counts " +
              (counts ? "exact" : "WRONG") + ", " + std::to_string(checked) + " session streams " +
              (disjoint ? "without overlap" : "OVERLAP")};
}

// ---------------------------------------------------------------- 7
Outcome qc_fidelity(const testing::TempDir& scratch) {
  int true_pos = 0, false_pos = 0, false_neg = 0;
  const auto stack = default_stack();
  for (int trial = 0; trial < 20; ++trial) {
    const auto seed = derive_seed(0x6A95, std::to_string(trial));
    Rng rng(seed);
    const auto& desc = stack[rng.below(16)];  // gaze, physio, video or audio
    const GroundTruthClock truth{desc.device_id, rng.uniform(-1, 1), rng.uniform(-100, 100), 0.0005, seed};
    const double end = 600.0;
    auto stream = generate_stream(desc, truth, 0.0, end, seed);
    FaultSpec spec;
    const double period = 1.0 / desc.nominal_rate_hz;
    double cursor = 5.0;
    for (int k = 0; k < 4; ++k) {
      const double duration = k == 0 ? 3.0 * period : rng.uniform(3.0 * period, 40.0);
      const double start = cursor + rng.uniform(1.0, 80.0);
      if (start + duration > end - 1.0) break;
      spec.dropouts.push_back({desc.stream_id, start, duration});
      cursor = start + duration;
    }
    const auto faulted = inject_faults({stream}, {}, spec, seed, end);
    auto model = truth_model(truth);
    model.source_tier = SourceTier::lsl;
    const auto aligned = align_stream(faulted.streams[0].samples, model);
    const auto scan = detect_gaps(aligned.times, desc.nominal_rate_hz, 3.0);

    std::vector<bool> matched(faulted.log.dropouts.size(), false);
    for (const auto& g : scan.gaps) {
      bool hit = false;
      for (std::size_t i = 0; i < faulted.log.dropouts.size(); ++i) {
        const auto& d = faulted.log.dropouts[i];
        if (std::abs(g.gap_start_auth_s - d.start_auth_s) <= 1.5 * period &&
            std::abs(double(g.expected_samples_missing) - double(d.samples_removed)) <= 1.0) {
          hit = !matched[i];
          matched[i] = true;
          break;
        }
      }
      (hit ? true_pos : false_pos)++;
    }
    for (bool m : matched) false_neg += m ? 0 : 1;
  }

  PcmBuffer tone;
  tone.sample_rate_hz = 48000;
  for (int i = 0; i < 48000; ++i) tone.samples.push_back(0.25 * std::sin(2 * std::numbers::pi * 1000.0 * i / 48000));
  write_file(scratch / "tone.f32", encode_f32(tone));
  const auto peak = audio_metrics(read_pcm(scratch / "tone.f32", 48000).samples, 48000).peak_dbfs;

  PcmBuffer snr_take;
  snr_take.sample_rate_hz = 48000;
  Rng noise(0x5A);
  for (int i = 0; i < 96000; ++i) {
    double x = 0.01 * noise.normal();
    if (i >= 48000) x += 0.1 * std::sqrt(2.0) * std::sin(2 * std::numbers::pi * 440.0 * i / 48000);
    snr_take.samples.push_back(x);
  }
  write_file(scratch / "snr.wav", encode_wav16(snr_take));
  const auto q = audio_metrics(read_pcm(scratch / "snr.wav").samples, 48000, TimeWindow{0, 1}, TimeWindow{1, 2});
  // Closed form: signal and noise powers add in the signal window.
  const double closed = 10.0 * std::log10((0.1 * 0.1 + 0.01 * 0.01) / (0.01 * 0.01));
  const double snr_err = q.snr_db ? std::abs(*q.snr_db - closed) : 1e9;

  const bool gaps_ok = false_pos == 0 && false_neg == 0 && true_pos > 0;
  const bool peak_ok = std::abs(peak - (-12.0412)) <= 0.01;
  const bool snr_ok = snr_err <= 0.1;
  return {gaps_ok && peak_ok && snr_ok,
          "gaps tp " + std::to_string(true_pos) + " fp " + std::to_string(false_pos) + " fn " +
              std::to_string(false_neg) + "; peak " + fmt(peak, 4) + " dBFS; snr " +
              fmt(q.snr_db.value_or(0), 3) + " dB vs " + fmt(closed, 3) + " dB"};
}

// ---------------------------------------------------------------- 8
int spawn(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MEETSYNC_CLI_PATH + "\" " + args + " 2>\"" + log.string() + "\"";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

Outcome fail_loud(const testing::TempDir& scratch) {
  write_file(scratch / "missing.json", R"({"seed": 7, "disabled_streams": ["physio_P3"]})");
  write_file(scratch / "clean.json", R"({"seed": 7})");
  const int missing = spawn("run --config \"" + (scratch / "missing.json").string() + "\" --out \"" +
                                (scratch / "cli_missing").string() + "\"",
                            scratch / "missing.log");
  const auto log = read_file(scratch / "missing.log");
  bool listed = log.find("physio_P3") != std::string::npos;
  if (fs::exists(scratch / "cli_missing/derivatives/qc_report.json")) {
    const auto qc = nlohmann::json::parse(read_file(scratch / "cli_missing/derivatives/qc_report.json"));
    listed &= qc["preflight"]["missing"] == nlohmann::json::array({"physio_P3"});
  } else {
    listed = false;
  }

  const int clean_a = spawn("run --config \"" + (scratch / "clean.json").string() + "\" --out \"" +
                                (scratch / "cli_a").string() + "\"",
                            scratch / "a.log");
  const int clean_b = spawn("run --config \"" + (scratch / "clean.json").string() + "\" --out \"" +
                                (scratch / "cli_b").string() + "\"",
                            scratch / "b.log");
  bool same = false;
  if (fs::exists(scratch / "cli_a/manifest.json") && fs::exists(scratch / "cli_b/manifest.json")) {
    same = read_file(scratch / "cli_a/manifest.json") == read_file(scratch / "cli_b/manifest.json");
  }
  return {missing == 2 && listed && clean_a == 0 && clean_b == 0 && same,
          "missing stream exit " + std::to_string(missing) + (listed ? " (physio_P3 listed)" : " (NOT listed)") +
              ", clean exits " + std::to_string(clean_a) + "/" + std::to_string(clean_b) + ", manifests " +
              (same ? "identical" : "DIFFER")};
}

// ---------------------------------------------------------------- 9
Outcome performance(const SessionRun& run) {
  if (!run.error.empty()) return {false, "session run failed: " + run.error};
  return {run.seconds < 60.0 && run.exit_code == 0,
          std::to_string(run.records) + " records, 40-min protocol, " + fmt(run.seconds, 2) + " s, qc exit " +
              std::to_string(run.exit_code)};
}

}  // namespace

int main() {
  testing::TempDir scratch;
  const auto session = run_full_session(scratch / "session");

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"scenario fidelity", scenario_fidelity},
      {"clock recovery", clock_recovery},
      {"robustness split", robustness_split},
      {"validation flags", validation_flags},
      {"packaging round trip", [&] { return packaging_round_trip(session, scratch); }},
      {"slicing", [&] { return slicing(session); }},
      {"qc fidelity", [&] { return qc_fidelity(scratch); }},
      {"fail-loud contract", [&] { return fail_loud(scratch); }},
      {"desk-scale performance", [&] { return performance(session); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << (i + 1) << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
