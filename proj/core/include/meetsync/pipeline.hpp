#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "meetsync/error.hpp"
#include "meetsync/qc.hpp"
#include "meetsync/scenario.hpp"
#include "meetsync/simdev.hpp"
#include "meetsync/syncfit.hpp"

namespace meetsync {

/// Per-device clock override; unset fields are drawn from the master seed.
struct DeviceOverride {
  std::optional<double> offset_s;
  std::optional<double> drift_ppm;
  std::optional<double> jitter_sigma_s;
  friend bool operator==(const DeviceOverride&, const DeviceOverride&) = default;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string session_id = "001";
  /// "default" or a path to a scenario JSON document.
  std::string scenario = "default";
  UntimedDurations untimed_durations{{"T2.settlement_form", 120.0}};
  double block_gap_s = 0.0;
  bool prompts = true;
  PromptPolicy prompt_policy;

  /// Random clocks: offset ~ U(-offset_range_s, offset_range_s), drift ~ U(-drift_range_ppm, drift_range_ppm).
  double offset_range_s = 2.0;
  double drift_range_ppm = 100.0;
  double jitter_sigma_s = 0.0005;
  std::map<std::string, DeviceOverride> devices;

  double anchor_cadence_s = 30.0;
  /// Anchor tiers per device; devices not listed use the defaults (lsl for
  /// every device, plus frame_log and sidecar for cameras). An empty list
  /// leaves the device without timing evidence.
  std::map<std::string, std::vector<SourceTier>> anchor_tiers;

  FaultSpec faults;
  std::vector<std::string> disabled_streams;
  /// Empty means every stream of the default stack.
  std::vector<std::string> expected_streams;

  FitKind method = FitKind::theil_sen;
  double tolerance_s = 0.005;
  std::size_t min_anchors_full_model = 8;
  bool offset_only_fallback = true;

  SummaryOptions qc;
  double calibration_rate_hz = 16000.0;

  /// Output root; never part of the recorded configuration.
  std::filesystem::path out;

  FitMethod fit_method() const;
};

/// Strict parse: unknown keys and wrong types raise Error{configuration}.
PipelineConfig config_from_json(const nlohmann::json& doc);
/// Fully resolved configuration (without the output root).
nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

/// Streams, clocks and anchors for a configuration, before any file is written.
struct SimulatedSession {
  Scenario scenario;
  std::vector<EventRecord> events;
  std::vector<GroundTruthClock> truths;
  std::vector<SimulatedStream> streams;
  std::vector<TimeAnchor> anchors;
  FaultLog fault_log;
  double session_end_s = 0.0;
};

SimulatedSession simulate_session(const PipelineConfig& config);

using Progress = std::function<void(std::string_view)>;

struct StageOverrides {
  std::optional<double> tolerance_s;
  std::optional<FitKind> method;
};

/// Writes sourcedata/ for a fresh root (absent or empty).
void stage_simulate(const PipelineConfig& config, const Progress& progress = {});
/// Fits every device and writes derivatives/clock_models.json and timing_report.json.
TimingReport stage_align(const std::filesystem::path& root, const StageOverrides& overrides = {},
                         const Progress& progress = {});
/// Maps every stream onto the session clock and writes the session tree.
SessionManifest stage_package(const std::filesystem::path& root, const Progress& progress = {});
/// Writes derivatives/qc_report.json, refreshes the manifest and returns the summary.
Summary stage_qc(const std::filesystem::path& root, const Progress& progress = {});

/// simulate -> align -> package -> qc; returns the QC exit code.
int run_end_to_end(const PipelineConfig& config, const Progress& progress = {});

inline constexpr int kExitOk = 0;
inline constexpr int kExitWarnings = 1;
inline constexpr int kExitFatal = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitIo = 74;

/// Configuration-class errors map to 64, everything else to 74.
int exit_code_for(const Error& error) noexcept;

}  // namespace meetsync
