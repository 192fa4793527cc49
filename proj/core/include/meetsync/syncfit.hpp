#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "meetsync/simdev.hpp"
#include "meetsync/timeline.hpp"

namespace meetsync {

/// Anchors grouped per device and per tier.
class AnchorPool {
 public:
  AnchorPool() = default;
  explicit AnchorPool(std::span<const TimeAnchor> anchors);

  void add(const TimeAnchor& anchor);
  std::span<const TimeAnchor> anchors(std::string_view device_id, SourceTier tier) const;
  std::vector<std::string> devices() const;
  std::size_t size() const noexcept;

 private:
  std::map<std::string, std::map<SourceTier, std::vector<TimeAnchor>>, std::less<>> groups_;
};

enum class FitKind { least_squares, theil_sen };

std::string_view to_string(FitKind kind) noexcept;
std::optional<FitKind> parse_fit_kind(std::string_view text) noexcept;

struct FitMethod {
  FitKind kind = FitKind::theil_sen;
  std::size_t min_anchors_full_model = 8;
  bool offset_only_fallback = true;
  /// Above this many anchors Theil-Sen draws a seeded subsample of pairs.
  std::size_t theil_sen_exact_limit = 2000;
  std::size_t theil_sen_pair_budget = 2'000'000;
  std::uint64_t subsample_seed = 0x5EED'0F'7A1B'5E11ULL;
};

struct AnchorSelection {
  std::vector<TimeAnchor> anchors;
  SourceTier tier = SourceTier::unaligned;
};

/// Highest-priority non-empty tier in order lsl > event_log > frame_log > sidecar.
AnchorSelection select_anchors(std::string_view device_id, const AnchorPool& pool);

/// Affine fit of t_auth against t_device. Anchors with zero weight are
/// ignored. With fewer than min_anchors_full_model anchors the fit is
/// offset-only (when allowed); with none the model is unaligned. Throws
/// Error{degenerate_geometry} when a slope is required but every t_device is
/// identical.
ClockModel fit_clock_model(std::span<const TimeAnchor> anchors, const FitMethod& method);

/// Maps every timestamp onto the authoritative timeline; values are copied
/// unchanged and rows re-sorted if jitter inverted their order. Throws
/// Error{unaligned_stream} for an unaligned model.
SampleSeries align_stream(const SampleSeries& samples, const ClockModel& model);

/// Residuals of each model against the anchors of its own source tier;
/// pass iff rms <= tolerance_s and the model is aligned.
TimingReport validate_session_alignment(std::span<const ClockModel> models,
                                        const AnchorPool& pool, double tolerance_s);

struct DeviceFit {
  ClockModel model;
  /// Tiers tried and rejected (failed tolerance) before the model's tier.
  std::vector<SourceTier> demoted_from;
};

/// Fits on the best tier; if that fit misses tolerance, refits on each lower
/// tier in turn and keeps the first that passes. If none passes the top-tier
/// fit is kept and demoted_from stays empty.
DeviceFit fit_with_repair(std::string_view device_id, const AnchorPool& pool,
                          const FitMethod& method, double tolerance_s);

nlohmann::json to_json(const ClockModel& model);
ClockModel clock_model_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const TimingReport& report);
TimingReport timing_report_from_json(const nlohmann::json& doc);

}  // namespace meetsync
