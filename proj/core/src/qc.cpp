#include "meetsync/qc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "meetsync/error.hpp"
#include "meetsync/syncfit.hpp"
#include "meetsync/tsv.hpp"

namespace meetsync {

namespace {

double rms_of(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

std::span<const double> window_span(std::span<const double> pcm, double rate, TimeWindow w,
                                    std::string_view what) {
  const auto n = pcm.size();
  if (!(w.start_s >= 0.0 && w.end_s > w.start_s)) {
    throw Error(ErrorKind::configuration, std::string(what) + " window is empty or negative");
  }
  const auto a = static_cast<std::size_t>(std::llround(w.start_s * rate));
  const auto b = static_cast<std::size_t>(std::llround(w.end_s * rate));
  if (b > n) {
    throw Error(ErrorKind::configuration, std::string(what) + " window extends past the signal");
  }
  return pcm.subspan(a, b - a);
}

// JSON has no infinities; report them as strings.
nlohmann::json db_value(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  return v;
}

}  // namespace

std::string_view to_string(Severity s) noexcept { return s == Severity::fatal ? "fatal" : "warning"; }

std::string_view to_string(SessionStatus s) noexcept {
  switch (s) {
    case SessionStatus::ok: return "ok";
    case SessionStatus::warnings: return "warnings";
    case SessionStatus::fatal: return "fatal";
  }
  return "fatal";
}

int exit_code(SessionStatus s) noexcept {
  switch (s) {
    case SessionStatus::ok: return 0;
    case SessionStatus::warnings: return 1;
    case SessionStatus::fatal: return 2;
  }
  return 2;
}

PreflightReport preflight(std::span<const std::string> expected,
                          std::span<const std::string> discovered) {
  PreflightReport r;
  r.expected.assign(expected.begin(), expected.end());
  r.discovered.assign(discovered.begin(), discovered.end());
  std::sort(r.expected.begin(), r.expected.end());
  std::sort(r.discovered.begin(), r.discovered.end());
  r.expected.erase(std::unique(r.expected.begin(), r.expected.end()), r.expected.end());
  r.discovered.erase(std::unique(r.discovered.begin(), r.discovered.end()), r.discovered.end());

  std::set_difference(r.expected.begin(), r.expected.end(), r.discovered.begin(),
                      r.discovered.end(), std::back_inserter(r.missing));
  std::set_difference(r.discovered.begin(), r.discovered.end(), r.expected.begin(),
                      r.expected.end(), std::back_inserter(r.extra));
  for (const auto& id : r.missing) {
    r.findings.push_back({Severity::fatal, "stream_missing", "expected stream " + id + " was not discovered"});
  }
  for (const auto& id : r.extra) {
    r.findings.push_back({Severity::warning, "stream_unexpected", "stream " + id + " was not expected"});
  }
  r.pass = r.missing.empty();
  return r;
}

GapScan detect_gaps(std::span<const double> t, double nominal_rate_hz, double k_intervals) {
  if (!(nominal_rate_hz > 0.0)) throw Error(ErrorKind::configuration, "nominal rate must be > 0");
  if (!(k_intervals >= 2.0)) throw Error(ErrorKind::configuration, "k_intervals must be >= 2");
  GapScan scan;
  if (t.size() < 2) {
    scan.insufficient_data = true;
    return scan;
  }
  const double period = 1.0 / nominal_rate_hz;
  const double threshold = k_intervals * period;
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double delta = t[i] - t[i - 1];
    if (delta <= threshold) continue;
    const auto missing = std::llround(delta * nominal_rate_hz) - 1;
    scan.gaps.push_back({t[i - 1] + period, delta - period,
                         static_cast<std::size_t>(std::max<long long>(missing, 0))});
  }
  return scan;
}

double to_dbfs(double amplitude) noexcept {
  if (amplitude <= 0.0) return -std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(amplitude);
}

AudioQC audio_metrics(std::span<const double> pcm, double sample_rate_hz,
                      std::optional<TimeWindow> noise_window,
                      std::optional<TimeWindow> signal_window) {
  if (!(sample_rate_hz > 0.0)) throw Error(ErrorKind::configuration, "sample rate must be > 0");
  AudioQC q;
  double peak = 0.0;
  for (double x : pcm) {
    const double a = std::abs(x);
    peak = std::max(peak, a);
    if (a >= kClipThreshold) ++q.clipping_sample_count;
  }
  q.silent = peak == 0.0;
  q.peak_dbfs = to_dbfs(peak);
  q.rms_dbfs = to_dbfs(rms_of(pcm));

  if (noise_window && signal_window) {
    const auto& n = *noise_window;
    const auto& s = *signal_window;
    if (n.start_s < s.end_s && s.start_s < n.end_s) {
      throw Error(ErrorKind::configuration, "noise and signal windows overlap");
    }
    const double noise = rms_of(window_span(pcm, sample_rate_hz, n, "noise"));
    const double signal = rms_of(window_span(pcm, sample_rate_hz, s, "signal"));
    if (noise > 0.0 && signal > 0.0) {
      q.snr_db = 20.0 * std::log10(signal / noise);
    } else {
      q.snr_db = signal > 0.0 ? std::numeric_limits<double>::infinity()
                              : -std::numeric_limits<double>::infinity();
    }
  }
  return q;
}

nlohmann::json to_json(const PreflightReport& p) {
  nlohmann::json findings = nlohmann::json::array();
  for (const auto& f : p.findings) {
    findings.push_back({{"severity", to_string(f.severity)}, {"code", f.code}, {"message", f.message}});
  }
  return {{"expected", p.expected}, {"discovered", p.discovered}, {"missing", p.missing},
          {"extra", p.extra},       {"findings", findings},       {"pass", p.pass}};
}

nlohmann::json to_json(const GapScan& g) {
  nlohmann::json gaps = nlohmann::json::array();
  for (const auto& x : g.gaps) {
    gaps.push_back({{"gap_start_auth_s", x.gap_start_auth_s},
                    {"gap_duration_s", x.gap_duration_s},
                    {"expected_samples_missing", x.expected_samples_missing}});
  }
  return {{"gaps", std::move(gaps)}, {"insufficient_data", g.insufficient_data}};
}

nlohmann::json to_json(const AudioQC& a) {
  nlohmann::json j{{"channel", a.channel},
                   {"peak_dbfs", db_value(a.peak_dbfs)},
                   {"rms_dbfs", db_value(a.rms_dbfs)},
                   {"clipping_sample_count", a.clipping_sample_count},
                   {"silent", a.silent},
                   {"peak_target_dbfs", kPeakTargetDbfs}};
  j["snr_db"] = a.snr_db ? db_value(*a.snr_db) : nlohmann::json(nullptr);
  return j;
}

Summary session_summary(const SessionBundle& bundle, const TimingReport& timing,
                        const GapReport& gaps, const PreflightReport& pre,
                        std::span<const AudioQC> audio, const SummaryOptions& options) {
  Summary s;
  s.preflight = pre;
  s.timing = timing;
  s.gaps = gaps;
  s.audio.assign(audio.begin(), audio.end());
  s.options = options;

  auto& f = s.findings;
  f.insert(f.end(), pre.findings.begin(), pre.findings.end());

  for (const auto& path : bundle.integrity_issues) {
    f.push_back({Severity::fatal, "hash_mismatch", path + " does not match its manifest hash"});
  }
  for (const auto& [id, stream] : bundle.streams) {
    if (!bundle.stream_aligned(id)) {
      f.push_back({Severity::fatal, "stream_unaligned",
                   "stream " + id + " (device " + stream.descriptor.device_id +
                       ") has no clock model and was not aligned"});
    }
  }
  for (const auto& e : timing.entries) {
    if (e.pass) continue;
    f.push_back({Severity::fatal, "timing_fail",
                 "device " + e.device_id + " (" + std::string(to_string(e.model.source_tier)) +
                     ") rms residual " + tsv::fixed6(e.rms_residual_s) + " s exceeds tolerance " +
                     tsv::fixed6(timing.tolerance_s) + " s"});
  }
  for (const auto& [device, tiers] : bundle.demotions) {
    for (auto t : tiers) {
      f.push_back({Severity::warning, "tier_demoted",
                   "device " + device + ": " + std::string(to_string(t)) +
                       " anchors failed tolerance; alignment repaired on a lower tier"});
    }
  }
  for (const auto& [id, scan] : gaps) {
    if (scan.insufficient_data) {
      f.push_back({Severity::warning, "insufficient_data", "stream " + id + " has fewer than 2 samples"});
    }
    for (const auto& g : scan.gaps) {
      const bool fatal = g.gap_duration_s > options.max_gap_s;
      f.push_back({fatal ? Severity::fatal : Severity::warning, fatal ? "gap_exceeds_max" : "gap",
                   "stream " + id + ": " + tsv::fixed6(g.gap_duration_s) + " s gap at " +
                       tsv::fixed6(g.gap_start_auth_s) + " s (" +
                       std::to_string(g.expected_samples_missing) + " samples missing)"});
    }
  }
  for (const auto& a : audio) {
    if (a.silent) {
      f.push_back({Severity::warning, "audio_silent", "audio channel " + a.channel + " is silent"});
    } else if (a.clipping_sample_count > 0) {
      f.push_back({Severity::warning, "audio_clipping",
                   "audio channel " + a.channel + " has " + std::to_string(a.clipping_sample_count) +
                       " samples at or above full scale"});
    }
  }

  s.status = SessionStatus::ok;
  for (const auto& x : f) {
    if (x.severity == Severity::fatal) {
      s.status = SessionStatus::fatal;
      break;
    }
    s.status = SessionStatus::warnings;
  }
  s.exit_code = exit_code(s.status);
  return s;
}

nlohmann::json Summary::document() const {
  nlohmann::json findings_json = nlohmann::json::array();
  for (const auto& x : findings) {
    findings_json.push_back({{"severity", to_string(x.severity)}, {"code", x.code}, {"message", x.message}});
  }
  nlohmann::json gaps_json = nlohmann::json::object();
  for (const auto& [id, g] : gaps) gaps_json[id] = to_json(g);
  nlohmann::json audio_json = nlohmann::json::array();
  for (const auto& a : audio) audio_json.push_back(to_json(a));
  return {{"status", to_string(status)},
          {"exit_code", exit_code},
          {"findings", std::move(findings_json)},
          {"preflight", to_json(preflight)},
          {"timing", to_json(timing)},
          {"gaps", std::move(gaps_json)},
          {"audio", std::move(audio_json)},
          {"options", {{"max_gap_s", options.max_gap_s}, {"k_intervals", options.k_intervals}}}};
}

}  // namespace meetsync
