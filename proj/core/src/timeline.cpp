#include "meetsync/timeline.hpp"

#include <algorithm>
#include <cmath>

#include "meetsync/error.hpp"

namespace meetsync {

std::string_view to_string(SourceTier tier) noexcept {
  switch (tier) {
    case SourceTier::lsl: return "lsl";
    case SourceTier::event_log: return "event_log";
    case SourceTier::frame_log: return "frame_log";
    case SourceTier::sidecar: return "sidecar";
    case SourceTier::unaligned: return "unaligned";
  }
  return "unaligned";
}

std::optional<SourceTier> parse_tier(std::string_view text) noexcept {
  for (auto tier : {SourceTier::lsl, SourceTier::event_log, SourceTier::frame_log,
                    SourceTier::sidecar, SourceTier::unaligned}) {
    if (to_string(tier) == text) return tier;
  }
  return std::nullopt;
}

ClockModel identity_model(std::string device_id, SourceTier tier, std::size_t anchor_count) {
  ClockModel model;
  model.device_id = std::move(device_id);
  model.source_tier = tier;
  model.anchor_count = tier == SourceTier::unaligned ? 0 : anchor_count;
  return model;
}

namespace {

void require_invertible(const ClockModel& model) {
  if (!model.invertible() || !std::isfinite(model.offset_s)) {
    throw Error(ErrorKind::degenerate_model,
                "clock model for '" + model.device_id + "' has non-positive slope");
  }
}

}  // namespace

double map_time(const ClockModel& model, double t_device_s) {
  if (!std::isfinite(t_device_s)) {
    throw Error(ErrorKind::invalid_time, "non-finite device time");
  }
  require_invertible(model);
  return model.offset_s + model.slope() * t_device_s;
}

double unmap_time(const ClockModel& model, double t_auth_s) {
  if (!std::isfinite(t_auth_s)) {
    throw Error(ErrorKind::invalid_time, "non-finite authoritative time");
  }
  require_invertible(model);
  return (t_auth_s - model.offset_s) / model.slope();
}

ResidualSummary model_residuals(const ClockModel& model, std::span<const TimeAnchor> anchors) {
  ResidualSummary out;
  if (anchors.empty()) return out;
  out.empty = false;
  out.residuals.reserve(anchors.size());
  double sum_sq = 0.0;
  for (const auto& a : anchors) {
    const double r = a.t_auth_s - map_time(model, a.t_device_s);
    out.residuals.push_back(r);
    sum_sq += r * r;
    out.max_abs_s = std::max(out.max_abs_s, std::abs(r));
  }
  out.rms_s = std::sqrt(sum_sq / static_cast<double>(anchors.size()));
  return out;
}

bool TimingReport::all_pass() const noexcept {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
}

const TimingEntry* TimingReport::find(std::string_view device_id) const noexcept {
  for (const auto& e : entries) {
    if (e.device_id == device_id) return &e;
  }
  return nullptr;
}

}  // namespace meetsync
