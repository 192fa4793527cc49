#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace meetsync {

/// Provenance class of a timing anchor, ordered by trust (lsl first).
enum class SourceTier { lsl, event_log, frame_log, sidecar, unaligned };

std::string_view to_string(SourceTier tier) noexcept;
std::optional<SourceTier> parse_tier(std::string_view text) noexcept;

/// Affine map from one device clock onto the authoritative session timeline:
///   t_auth = offset_s + (1 + drift_ppm * 1e-6) * t_device
///
/// The authoritative timeline is the protocol event logger's host clock, so
/// the host itself always carries the identity model.
struct ClockModel {
  std::string device_id;
  double offset_s = 0.0;
  double drift_ppm = 0.0;
  std::size_t anchor_count = 0;
  double rms_residual_s = 0.0;
  SourceTier source_tier = SourceTier::unaligned;

  double slope() const noexcept { return 1.0 + drift_ppm * 1e-6; }
  bool invertible() const noexcept { return slope() > 0.0; }
  bool aligned() const noexcept { return source_tier != SourceTier::unaligned; }

  friend bool operator==(const ClockModel&, const ClockModel&) = default;
};

/// A model that maps device time to itself, tagged with the given tier.
ClockModel identity_model(std::string device_id, SourceTier tier = SourceTier::event_log,
                          std::size_t anchor_count = 1);

/// One paired clock observation.
struct TimeAnchor {
  std::string device_id;
  double t_device_s = 0.0;
  double t_auth_s = 0.0;
  SourceTier tier = SourceTier::lsl;
  double weight = 1.0;

  friend bool operator==(const TimeAnchor&, const TimeAnchor&) = default;
};

/// Throws Error{invalid_time} for non-finite input and Error{degenerate_model}
/// if the model's slope is not positive.
double map_time(const ClockModel& model, double t_device_s);
double unmap_time(const ClockModel& model, double t_auth_s);

struct ResidualSummary {
  double rms_s = 0.0;
  double max_abs_s = 0.0;
  std::vector<double> residuals;  // t_auth - map_time(t_device), in anchor order
  bool empty = true;
};

ResidualSummary model_residuals(const ClockModel& model, std::span<const TimeAnchor> anchors);

struct TimingEntry {
  std::string device_id;
  ClockModel model;
  double rms_residual_s = 0.0;
  double max_abs_residual_s = 0.0;
  bool pass = false;

  friend bool operator==(const TimingEntry&, const TimingEntry&) = default;
};

struct TimingReport {
  std::vector<TimingEntry> entries;  // sorted by device_id
  double tolerance_s = 0.005;

  bool all_pass() const noexcept;
  const TimingEntry* find(std::string_view device_id) const noexcept;

  friend bool operator==(const TimingReport&, const TimingReport&) = default;
};

}  // namespace meetsync
