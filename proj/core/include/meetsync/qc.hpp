#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "meetsync/packager.hpp"
#include "meetsync/timeline.hpp"

namespace meetsync {

enum class Severity { warning, fatal };
std::string_view to_string(Severity s) noexcept;

struct Finding {
  Severity severity = Severity::warning;
  std::string code;
  std::string message;
  friend bool operator==(const Finding&, const Finding&) = default;
};

struct PreflightReport {
  std::vector<std::string> expected;
  std::vector<std::string> discovered;
  std::vector<std::string> missing;  // expected but not discovered
  std::vector<std::string> extra;    // discovered but not expected
  std::vector<Finding> findings;
  bool pass = true;
};

/// Missing expected streams are fatal; unexpected extras are warnings.
PreflightReport preflight(std::span<const std::string> expected,
                          std::span<const std::string> discovered);

struct Gap {
  double gap_start_auth_s = 0.0;  // time the first missing sample was due
  double gap_duration_s = 0.0;
  std::size_t expected_samples_missing = 0;
};

struct GapScan {
  std::vector<Gap> gaps;
  bool insufficient_data = false;
};

/// A gap is any inter-sample delta larger than k_intervals / nominal_rate_hz.
GapScan detect_gaps(std::span<const double> t_auth, double nominal_rate_hz, double k_intervals = 3.0);

using GapReport = std::map<std::string, GapScan>;

struct TimeWindow {
  double start_s = 0.0;
  double end_s = 0.0;
};

inline constexpr double kClipThreshold = 0.999;
inline constexpr double kPeakTargetDbfs = -12.0;

struct AudioQC {
  std::string channel;
  double peak_dbfs = 0.0;  // -inf for a silent channel
  double rms_dbfs = 0.0;
  std::optional<double> snr_db;
  std::size_t clipping_sample_count = 0;
  bool silent = false;
};

/// Level metrics over normalized PCM. SNR uses the RMS ratio of the two
/// windows; windows must lie inside the signal and not overlap
/// (Error{configuration} otherwise).
AudioQC audio_metrics(std::span<const double> pcm, double sample_rate_hz,
                      std::optional<TimeWindow> noise_window = std::nullopt,
                      std::optional<TimeWindow> signal_window = std::nullopt);

double to_dbfs(double amplitude) noexcept;

struct SummaryOptions {
  double max_gap_s = 5.0;
  double k_intervals = 3.0;
};

enum class SessionStatus { ok, warnings, fatal };
std::string_view to_string(SessionStatus s) noexcept;
int exit_code(SessionStatus s) noexcept;

struct Summary {
  SessionStatus status = SessionStatus::ok;
  int exit_code = 0;
  std::vector<Finding> findings;
  nlohmann::json document() const;

  // Inputs echoed into the document.
  PreflightReport preflight;
  TimingReport timing;
  GapReport gaps;
  std::vector<AudioQC> audio;
  SummaryOptions options;
};

/// Aggregates every report. The session is fatal if preflight failed, any
/// stream is unaligned, any device fails timing, any gap exceeds max_gap_s,
/// or any file fails its manifest hash.
Summary session_summary(const SessionBundle& bundle, const TimingReport& timing,
                        const GapReport& gaps, const PreflightReport& preflight,
                        std::span<const AudioQC> audio, const SummaryOptions& options = {});

nlohmann::json to_json(const PreflightReport& p);
nlohmann::json to_json(const GapScan& g);
nlohmann::json to_json(const AudioQC& a);

}  // namespace meetsync
