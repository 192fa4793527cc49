#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "meetsync/rng.hpp"
#include "meetsync/scenario.hpp"
#include "meetsync/timeline.hpp"

namespace meetsync {

/// The simulated device clock: t_auth = true_offset_s + (1 + true_drift_ppm*1e-6) * t_device.
struct GroundTruthClock {
  std::string device_id;
  double true_offset_s = 0.0;
  double true_drift_ppm = 0.0;
  double jitter_sigma_s = 0.0;
  std::uint64_t seed = 0;

  double slope() const noexcept { return 1.0 + true_drift_ppm * 1e-6; }
  friend bool operator==(const GroundTruthClock&, const GroundTruthClock&) = default;
};

void validate(const GroundTruthClock& truth);

/// The ClockModel that a perfect recovery would produce.
ClockModel truth_model(const GroundTruthClock& truth);

enum class Modality { gaze, physio, video_frames, audio_blocks, markers };

std::string_view to_string(Modality modality) noexcept;
std::optional<Modality> parse_modality(std::string_view text) noexcept;

struct StreamDescriptor {
  std::string stream_id;
  std::string device_id;
  std::optional<std::string> participant;  // P1..P4 or "room"
  Modality modality = Modality::markers;
  double nominal_rate_hz = 1.0;
  std::vector<std::string> channels;

  /// Markers are event-driven; their rate is nominal only.
  bool regular() const noexcept { return modality != Modality::markers; }
  friend bool operator==(const StreamDescriptor&, const StreamDescriptor&) = default;
};

void validate(const StreamDescriptor& desc);

/// Columnar sample storage: one timestamp per row, `channel_count` values per
/// row stored contiguously. The timebase (device or authoritative) is implied
/// by where the series lives.
struct SampleSeries {
  std::size_t channel_count = 0;
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const noexcept { return times.size(); }
  bool empty() const noexcept { return times.empty(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return {values.data() + i * channel_count, channel_count};
  }
  void push_back(double t, std::span<const double> row_values);
  void reserve(std::size_t rows);

  friend bool operator==(const SampleSeries&, const SampleSeries&) = default;
};

/// A generated stream together with the authoritative time at which each
/// sample was really taken (ground truth, used only for fault injection and
/// auditing).
struct SimulatedStream {
  StreamDescriptor descriptor;
  SampleSeries samples;  // device timebase
  std::vector<double> truth_auth_s;
};

/// Noise-free device reading of authoritative time t_auth_s.
double device_time(const GroundTruthClock& truth, double t_auth_s);
/// Device reading with Gaussian read jitter drawn from `rng`.
double device_time(const GroundTruthClock& truth, double t_auth_s, Rng& rng);

/// One sample per 1/rate of authoritative time over [start, end); values from a
/// seeded sinusoid-plus-noise generator (index channels count samples).
/// Sample-time jitter is truncated at two sigma so timestamps stay strictly
/// increasing whenever jitter_sigma_s < 1/(4*rate).
SimulatedStream generate_stream(const StreamDescriptor& desc, const GroundTruthClock& truth,
                                double start_auth_s, double end_auth_s,
                                std::uint64_t waveform_seed);

/// Marker stream: one sample per spine event (value = event index), read on
/// the logger's clock.
SimulatedStream generate_marker_stream(const StreamDescriptor& desc,
                                       const GroundTruthClock& truth,
                                       std::span<const EventRecord> events);

/// One anchor per (device, pulse), grouped by device in `truths` order.
std::vector<TimeAnchor> emit_anchor_pulses(std::span<const double> pulse_times_auth,
                                           std::span<const GroundTruthClock> truths,
                                           SourceTier tier);

/// Pulse times start, start+cadence, ... strictly below end.
std::vector<double> pulse_schedule(double start_s, double end_s, double cadence_s);

struct DropoutSpec {
  std::string stream_id;
  double start_auth_s = 0.0;
  double duration_s = 0.0;
};

struct OutlierSpec {
  double fraction = 0.0;
  double bias_s = 0.0;
};

struct FaultSpec {
  std::vector<DropoutSpec> dropouts;
  OutlierSpec anchor_outliers;
};

void validate(const FaultSpec& spec);

struct FaultLog {
  struct Dropout {
    std::string stream_id;
    double start_auth_s = 0.0;
    double duration_s = 0.0;
    std::size_t samples_removed = 0;
    friend bool operator==(const Dropout&, const Dropout&) = default;
  };
  struct Outlier {
    std::string device_id;
    SourceTier tier = SourceTier::lsl;
    std::size_t anchor_index = 0;  // position in the input anchor list
    double t_auth_s = 0.0;
    double bias_s = 0.0;
    friend bool operator==(const Outlier&, const Outlier&) = default;
  };
  std::vector<Dropout> dropouts;
  std::vector<Outlier> outliers;

  friend bool operator==(const FaultLog&, const FaultLog&) = default;
};

nlohmann::json to_json(const FaultLog& log);
FaultLog fault_log_from_json(const nlohmann::json& doc);

struct FaultResult {
  std::vector<SimulatedStream> streams;
  std::vector<TimeAnchor> anchors;
  FaultLog log;
};

/// Removes samples whose true authoritative time falls in a dropout window and
/// adds bias_s to t_device of round(fraction * n) seeded anchors per device.
/// Throws Error{configuration} for windows outside [0, session_end_s] or
/// unknown stream ids.
FaultResult inject_faults(std::vector<SimulatedStream> streams, std::vector<TimeAnchor> anchors,
                          const FaultSpec& spec, std::uint64_t seed, double session_end_s);

/// The simulated acquisition stack: 4 eye trackers, 4 wearables, 7 cameras
/// (4 desk-adjacent, 3 overview), 5 microphones on one audio interface, and
/// the protocol event logger.
std::vector<StreamDescriptor> default_stack();

inline constexpr std::string_view kHostDevice = "host";

// Raw sourcedata formats.
std::string format_raw_stream(const SimulatedStream& stream);
SampleSeries parse_raw_stream(std::string_view text, const StreamDescriptor& desc,
                              std::string_view source_name);
std::string format_anchors(std::span<const TimeAnchor> anchors);
std::vector<TimeAnchor> parse_anchors(std::string_view text, std::string_view source_name);

nlohmann::json to_json(const StreamDescriptor& desc);
StreamDescriptor descriptor_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const GroundTruthClock& truth);
GroundTruthClock truth_from_json(const nlohmann::json& doc);

}  // namespace meetsync
