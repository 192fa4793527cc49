#include "meetsync/syncfit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "meetsync/error.hpp"
#include "meetsync/rng.hpp"

namespace meetsync {

namespace {

constexpr SourceTier kTierOrder[] = {SourceTier::lsl, SourceTier::event_log,
                                     SourceTier::frame_log, SourceTier::sidecar};

// Median by selection; averages the two middle elements for even sizes.
double median_inplace(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

struct Line {
  double intercept;  // offset_s
  double slope_minus_one;
};

// Regress d = t_auth - t_device on x = t_device so the drift term is computed
// directly rather than as (slope - 1).
Line least_squares(std::span<const TimeAnchor> a) {
  double sw = 0, sx = 0, sd = 0;
  for (const auto& p : a) {
    sw += p.weight;
    sx += p.weight * p.t_device_s;
    sd += p.weight * (p.t_auth_s - p.t_device_s);
  }
  const double mx = sx / sw;
  const double md = sd / sw;
  double sxx = 0, sxd = 0;
  for (const auto& p : a) {
    const double dx = p.t_device_s - mx;
    sxx += p.weight * dx * dx;
    sxd += p.weight * dx * ((p.t_auth_s - p.t_device_s) - md);
  }
  if (!(sxx > 0.0)) {
    throw Error(ErrorKind::degenerate_geometry,
                "all anchors share one device time; slope is not estimable");
  }
  const double b = sxd / sxx;
  return {md - b * mx, b};
}

Line theil_sen(std::span<const TimeAnchor> a, const FitMethod& method) {
  const std::size_t n = a.size();
  std::vector<double> slopes;
  auto add_pair = [&](std::size_t i, std::size_t j) {
    const double dx = a[j].t_device_s - a[i].t_device_s;
    if (dx == 0.0) return;
    const double dd = (a[j].t_auth_s - a[j].t_device_s) - (a[i].t_auth_s - a[i].t_device_s);
    slopes.push_back(dd / dx);
  };
  if (n <= method.theil_sen_exact_limit) {
    slopes.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) add_pair(i, j);
    }
  } else {
    Rng rng(derive_seed(method.subsample_seed, std::to_string(n)));
    slopes.reserve(method.theil_sen_pair_budget);
    for (std::size_t k = 0; k < method.theil_sen_pair_budget; ++k) {
      const auto i = static_cast<std::size_t>(rng.below(n));
      auto j = static_cast<std::size_t>(rng.below(n - 1));
      if (j >= i) ++j;
      add_pair(std::min(i, j), std::max(i, j));
    }
  }
  if (slopes.empty()) {
    throw Error(ErrorKind::degenerate_geometry,
                "all anchors share one device time; slope is not estimable");
  }
  const double b = median_inplace(slopes);
  std::vector<double> intercepts;
  intercepts.reserve(n);
  for (const auto& p : a) intercepts.push_back((p.t_auth_s - p.t_device_s) - b * p.t_device_s);
  return {median_inplace(intercepts), b};
}

}  // namespace

AnchorPool::AnchorPool(std::span<const TimeAnchor> anchors) {
  for (const auto& a : anchors) add(a);
}

void AnchorPool::add(const TimeAnchor& anchor) {
  if (anchor.tier == SourceTier::unaligned) {
    throw Error(ErrorKind::configuration, "anchor cannot carry the unaligned tier");
  }
  if (!std::isfinite(anchor.t_device_s) || !std::isfinite(anchor.t_auth_s)) {
    throw Error(ErrorKind::invalid_time, "anchor for " + anchor.device_id + " is not finite");
  }
  if (!(anchor.weight >= 0.0)) {
    throw Error(ErrorKind::configuration, "anchor weight must be >= 0");
  }
  groups_[anchor.device_id][anchor.tier].push_back(anchor);
}

std::span<const TimeAnchor> AnchorPool::anchors(std::string_view device_id, SourceTier tier) const {
  auto dev = groups_.find(device_id);
  if (dev == groups_.end()) return {};
  auto it = dev->second.find(tier);
  if (it == dev->second.end()) return {};
  return it->second;
}

std::vector<std::string> AnchorPool::devices() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : groups_) out.push_back(id);
  return out;
}

std::size_t AnchorPool::size() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, tiers] : groups_) {
    for (const auto& [__, v] : tiers) n += v.size();
  }
  return n;
}

std::string_view to_string(FitKind kind) noexcept {
  return kind == FitKind::least_squares ? "least_squares" : "theil_sen";
}

std::optional<FitKind> parse_fit_kind(std::string_view text) noexcept {
  if (text == "least_squares") return FitKind::least_squares;
  if (text == "theil_sen") return FitKind::theil_sen;
  return std::nullopt;
}

AnchorSelection select_anchors(std::string_view device_id, const AnchorPool& pool) {
  for (auto tier : kTierOrder) {
    auto a = pool.anchors(device_id, tier);
    if (!a.empty()) return {{a.begin(), a.end()}, tier};
  }
  return {};
}

ClockModel fit_clock_model(std::span<const TimeAnchor> anchors, const FitMethod& method) {
  if (method.min_anchors_full_model < 2) {
    throw Error(ErrorKind::configuration, "min_anchors_full_model must be >= 2");
  }
  std::vector<TimeAnchor> used;
  used.reserve(anchors.size());
  for (const auto& a : anchors) {
    if (!anchors.empty() && a.device_id != anchors.front().device_id) {
      throw Error(ErrorKind::configuration, "anchors passed to one fit must share a device_id");
    }
    if (a.weight > 0.0) used.push_back(a);
  }

  ClockModel model;
  if (!anchors.empty()) model.device_id = anchors.front().device_id;
  if (used.empty()) return model;  // unaligned

  const std::size_t n = used.size();
  if (n < method.min_anchors_full_model && (method.offset_only_fallback || n == 1)) {
    if (!method.offset_only_fallback) {
      throw Error(ErrorKind::degenerate_geometry,
                  "one anchor cannot determine a slope and offset-only fallback is off");
    }
    std::vector<double> d;
    d.reserve(n);
    for (const auto& a : used) d.push_back(a.t_auth_s - a.t_device_s);
    model.offset_s = median_inplace(d);
    model.drift_ppm = 0.0;
  } else {
    const Line line = method.kind == FitKind::least_squares ? least_squares(used) : theil_sen(used, method);
    model.offset_s = line.intercept;
    model.drift_ppm = line.slope_minus_one * 1e6;
    if (!model.invertible()) {
      throw Error(ErrorKind::degenerate_model, "fitted slope for " + model.device_id + " is not positive");
    }
  }
  model.anchor_count = n;
  model.source_tier = used.front().tier;
  model.rms_residual_s = model_residuals(model, used).rms_s;
  return model;
}

SampleSeries align_stream(const SampleSeries& samples, const ClockModel& model) {
  if (!model.aligned()) {
    throw Error(ErrorKind::unaligned_stream,
                "device " + model.device_id + " has no clock model; stream cannot be aligned");
  }
  SampleSeries out;
  out.channel_count = samples.channel_count;
  out.times.reserve(samples.size());
  for (double t : samples.times) out.times.push_back(map_time(model, t));

  if (std::is_sorted(out.times.begin(), out.times.end())) {
    out.values = samples.values;
    return out;
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.times[a] < out.times[b]; });
  SampleSeries sorted;
  sorted.channel_count = samples.channel_count;
  sorted.reserve(samples.size());
  for (auto i : order) sorted.push_back(out.times[i], samples.row(i));
  return sorted;
}

TimingReport validate_session_alignment(std::span<const ClockModel> models,
                                        const AnchorPool& pool, double tolerance_s) {
  if (!(tolerance_s > 0.0)) throw Error(ErrorKind::configuration, "tolerance must be > 0");
  TimingReport report;
  report.tolerance_s = tolerance_s;
  for (const auto& m : models) {
    TimingEntry e;
    e.device_id = m.device_id;
    e.model = m;
    if (m.aligned()) {
      const auto r = model_residuals(m, pool.anchors(m.device_id, m.source_tier));
      e.rms_residual_s = r.rms_s;
      e.max_abs_residual_s = r.max_abs_s;
      e.pass = !r.empty && r.rms_s <= tolerance_s;
    }
    report.entries.push_back(std::move(e));
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const auto& a, const auto& b) { return a.device_id < b.device_id; });
  return report;
}

DeviceFit fit_with_repair(std::string_view device_id, const AnchorPool& pool,
                          const FitMethod& method, double tolerance_s) {
  DeviceFit top;
  top.model.device_id = std::string(device_id);
  bool have_top = false;
  std::vector<SourceTier> rejected;
  for (auto tier : kTierOrder) {
    auto anchors = pool.anchors(device_id, tier);
    if (anchors.empty()) continue;
    ClockModel m;
    try {
      m = fit_clock_model(anchors, method);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate_geometry) throw;
      rejected.push_back(tier);
      continue;
    }
    if (!have_top) {
      top.model = m;
      have_top = true;
    }
    if (m.aligned() && m.rms_residual_s <= tolerance_s) {
      return {m, rejected};
    }
    rejected.push_back(tier);
  }
  return top;
}

nlohmann::json to_json(const ClockModel& m) {
  return {{"device_id", m.device_id},
          {"offset_s", m.offset_s},
          {"drift_ppm", m.drift_ppm},
          {"anchor_count", m.anchor_count},
          {"rms_residual_s", m.rms_residual_s},
          {"source_tier", to_string(m.source_tier)}};
}

ClockModel clock_model_from_json(const nlohmann::json& j) {
  ClockModel m;
  m.device_id = j.at("device_id").get<std::string>();
  m.offset_s = j.at("offset_s").get<double>();
  m.drift_ppm = j.at("drift_ppm").get<double>();
  m.anchor_count = j.at("anchor_count").get<std::size_t>();
  m.rms_residual_s = j.at("rms_residual_s").get<double>();
  const auto tier = parse_tier(j.at("source_tier").get<std::string>());
  if (!tier) throw Error(ErrorKind::parse, "clock model: unknown source_tier");
  m.source_tier = *tier;
  return m;
}

nlohmann::json to_json(const TimingReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"device_id", e.device_id},
                       {"model", to_json(e.model)},
                       {"rms_residual_s", e.rms_residual_s},
                       {"max_abs_residual_s", e.max_abs_residual_s},
                       {"pass", e.pass}});
  }
  return {{"entries", std::move(entries)}, {"tolerance_s", r.tolerance_s}};
}

TimingReport timing_report_from_json(const nlohmann::json& j) {
  TimingReport r;
  r.tolerance_s = j.at("tolerance_s").get<double>();
  for (const auto& e : j.at("entries")) {
    r.entries.push_back({e.at("device_id").get<std::string>(), clock_model_from_json(e.at("model")),
                         e.at("rms_residual_s").get<double>(),
                         e.at("max_abs_residual_s").get<double>(), e.at("pass").get<bool>()});
  }
  return r;
}

}  // namespace meetsync
