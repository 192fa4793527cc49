#include "meetsync/simdev.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>

#include <nlohmann/json.hpp>

#include "meetsync/error.hpp"
#include "meetsync/tsv.hpp"

namespace meetsync {

namespace {

constexpr std::array<std::string_view, 5> kModalityNames{"gaze", "physio", "video_frames",
                                                         "audio_blocks", "markers"};

bool is_index_channel(std::string_view name) {
  return name.size() >= 6 && name.substr(name.size() - 6) == "_index";
}

double base_frequency_hz(Modality m) {
  switch (m) {
    case Modality::gaze: return 0.5;
    case Modality::physio: return 1.1;
    case Modality::video_frames: return 0.2;
    case Modality::audio_blocks: return 0.05;
    case Modality::markers: return 0.0;
  }
  return 0.0;
}

}  // namespace

void validate(const GroundTruthClock& truth) {
  if (!(truth.slope() > 0.0) || !std::isfinite(truth.true_offset_s)) {
    throw Error(ErrorKind::configuration, "device " + truth.device_id + ": clock slope must be > 0");
  }
  if (!(truth.jitter_sigma_s >= 0.0)) {
    throw Error(ErrorKind::configuration, "device " + truth.device_id + ": jitter must be >= 0");
  }
}

ClockModel truth_model(const GroundTruthClock& truth) {
  ClockModel m;
  m.device_id = truth.device_id;
  m.offset_s = truth.true_offset_s;
  m.drift_ppm = truth.true_drift_ppm;
  return m;
}

std::string_view to_string(Modality modality) noexcept {
  return kModalityNames[static_cast<std::size_t>(modality)];
}

std::optional<Modality> parse_modality(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kModalityNames.size(); ++i) {
    if (kModalityNames[i] == text) return static_cast<Modality>(i);
  }
  return std::nullopt;
}

void validate(const StreamDescriptor& desc) {
  if (desc.stream_id.empty() || desc.device_id.empty()) {
    throw Error(ErrorKind::configuration, "stream descriptor needs stream_id and device_id");
  }
  if (!(desc.nominal_rate_hz > 0.0) || !std::isfinite(desc.nominal_rate_hz)) {
    throw Error(ErrorKind::configuration, "stream " + desc.stream_id + ": rate must be > 0");
  }
  if (desc.channels.empty()) {
    throw Error(ErrorKind::configuration, "stream " + desc.stream_id + ": no channels");
  }
}

void SampleSeries::push_back(double t, std::span<const double> row_values) {
  times.push_back(t);
  values.insert(values.end(), row_values.begin(), row_values.end());
}

void SampleSeries::reserve(std::size_t rows) {
  times.reserve(rows);
  values.reserve(rows * channel_count);
}

double device_time(const GroundTruthClock& truth, double t_auth_s) {
  return (t_auth_s - truth.true_offset_s) / truth.slope();
}

double device_time(const GroundTruthClock& truth, double t_auth_s, Rng& rng) {
  const double t = device_time(truth, t_auth_s);
  if (truth.jitter_sigma_s == 0.0) return t;
  return t + truth.jitter_sigma_s * rng.normal();
}

SimulatedStream generate_stream(const StreamDescriptor& desc, const GroundTruthClock& truth,
                                double start_auth_s, double end_auth_s,
                                std::uint64_t waveform_seed) {
  validate(desc);
  validate(truth);
  if (!(start_auth_s < end_auth_s)) {
    throw Error(ErrorKind::configuration, "stream " + desc.stream_id + ": empty span");
  }

  const auto count =
      static_cast<std::size_t>(std::floor((end_auth_s - start_auth_s) * desc.nominal_rate_hz + 1e-9));
  const std::size_t nch = desc.channels.size();

  SimulatedStream out;
  out.descriptor = desc;
  out.samples.channel_count = nch;
  out.samples.reserve(count);
  out.truth_auth_s.reserve(count);

  Rng wave(derive_seed(waveform_seed, desc.stream_id));
  Rng jitter(derive_seed(truth.seed, "samples/" + desc.stream_id));

  std::vector<double> phase(nch), freq(nch), amp(nch);
  const double f0 = base_frequency_hz(desc.modality);
  for (std::size_t c = 0; c < nch; ++c) {
    phase[c] = 2.0 * std::numbers::pi * wave.uniform();
    freq[c] = f0 * (1.0 + 0.37 * static_cast<double>(c));
    amp[c] = 0.5 + wave.uniform();
  }

  std::vector<double> row(nch);
  for (std::size_t i = 0; i < count; ++i) {
    const double t_auth = start_auth_s + static_cast<double>(i) / desc.nominal_rate_hz;
    double eps = 0.0;
    if (truth.jitter_sigma_s > 0.0) {
      double z = jitter.normal();
      while (std::abs(z) > 2.0) z = jitter.normal();
      eps = truth.jitter_sigma_s * z;
    }
    for (std::size_t c = 0; c < nch; ++c) {
      if (is_index_channel(desc.channels[c])) {
        row[c] = static_cast<double>(i);
      } else {
        row[c] = amp[c] * std::sin(2.0 * std::numbers::pi * freq[c] * t_auth + phase[c]) +
                 0.05 * wave.normal();
      }
    }
    out.samples.push_back(device_time(truth, t_auth) + eps, row);
    out.truth_auth_s.push_back(t_auth);
  }
  return out;
}

SimulatedStream generate_marker_stream(const StreamDescriptor& desc,
                                       const GroundTruthClock& truth,
                                       std::span<const EventRecord> events) {
  validate(desc);
  validate(truth);
  SimulatedStream out;
  out.descriptor = desc;
  out.samples.channel_count = desc.channels.size();
  Rng jitter(derive_seed(truth.seed, "samples/" + desc.stream_id));
  std::vector<double> row(desc.channels.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    std::fill(row.begin(), row.end(), static_cast<double>(i));
    out.samples.push_back(device_time(truth, events[i].onset_s, jitter), row);
    out.truth_auth_s.push_back(events[i].onset_s);
  }
  return out;
}

std::vector<TimeAnchor> emit_anchor_pulses(std::span<const double> pulse_times_auth,
                                           std::span<const GroundTruthClock> truths,
                                           SourceTier tier) {
  if (!std::is_sorted(pulse_times_auth.begin(), pulse_times_auth.end())) {
    throw Error(ErrorKind::configuration, "anchor pulse times must be sorted");
  }
  std::vector<TimeAnchor> anchors;
  anchors.reserve(pulse_times_auth.size() * truths.size());
  for (const auto& truth : truths) {
    validate(truth);
    Rng rng(derive_seed(truth.seed, "anchors/" + std::string(to_string(tier))));
    for (double t : pulse_times_auth) {
      anchors.push_back({truth.device_id, device_time(truth, t, rng), t, tier, 1.0});
    }
  }
  return anchors;
}

std::vector<double> pulse_schedule(double start_s, double end_s, double cadence_s) {
  if (!(cadence_s > 0.0)) throw Error(ErrorKind::configuration, "anchor cadence must be > 0");
  std::vector<double> out;
  for (std::size_t k = 0;; ++k) {
    const double t = start_s + static_cast<double>(k) * cadence_s;
    if (t >= end_s) break;
    out.push_back(t);
  }
  return out;
}

void validate(const FaultSpec& spec) {
  const auto& o = spec.anchor_outliers;
  if (!(o.fraction >= 0.0 && o.fraction <= 1.0)) {
    throw Error(ErrorKind::configuration, "anchor outlier fraction must be in [0, 1]");
  }
  if (!std::isfinite(o.bias_s)) {
    throw Error(ErrorKind::configuration, "anchor outlier bias must be finite");
  }
  for (const auto& d : spec.dropouts) {
    if (!(d.duration_s > 0.0) || !std::isfinite(d.start_auth_s)) {
      throw Error(ErrorKind::configuration, "dropout on " + d.stream_id + " needs duration > 0");
    }
  }
}

FaultResult inject_faults(std::vector<SimulatedStream> streams, std::vector<TimeAnchor> anchors,
                          const FaultSpec& spec, std::uint64_t seed, double session_end_s) {
  validate(spec);
  FaultResult result;

  for (const auto& d : spec.dropouts) {
    if (d.start_auth_s < 0.0 || d.start_auth_s + d.duration_s > session_end_s) {
      throw Error(ErrorKind::configuration,
                  "dropout on " + d.stream_id + " lies outside the session span [0, " +
                      tsv::fixed6(session_end_s) + "]");
    }
    auto it = std::find_if(streams.begin(), streams.end(), [&](const SimulatedStream& s) {
      return s.descriptor.stream_id == d.stream_id;
    });
    if (it == streams.end()) {
      throw Error(ErrorKind::configuration, "dropout names unknown stream " + d.stream_id);
    }

    auto& s = *it;
    const double lo = d.start_auth_s;
    const double hi = d.start_auth_s + d.duration_s;
    SampleSeries kept;
    kept.channel_count = s.samples.channel_count;
    kept.reserve(s.samples.size());
    std::vector<double> kept_truth;
    kept_truth.reserve(s.samples.size());
    std::size_t removed = 0;
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
      const double t = s.truth_auth_s[i];
      if (t >= lo && t < hi) {
        ++removed;
        continue;
      }
      kept.push_back(s.samples.times[i], s.samples.row(i));
      kept_truth.push_back(t);
    }
    s.samples = std::move(kept);
    s.truth_auth_s = std::move(kept_truth);
    result.log.dropouts.push_back({d.stream_id, d.start_auth_s, d.duration_s, removed});
  }

  const auto& o = spec.anchor_outliers;
  if (o.fraction > 0.0) {
    std::map<std::string, std::vector<std::size_t>> by_device;
    for (std::size_t i = 0; i < anchors.size(); ++i) by_device[anchors[i].device_id].push_back(i);
    for (auto& [device, idx] : by_device) {
      const auto k = static_cast<std::size_t>(std::llround(o.fraction * static_cast<double>(idx.size())));
      Rng rng(derive_seed(seed, "outliers/" + device));
      // Partial Fisher-Yates: the first k slots become the chosen set.
      for (std::size_t j = 0; j < k; ++j) {
        std::swap(idx[j], idx[j + rng.below(idx.size() - j)]);
      }
      std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
      for (std::size_t j = 0; j < k; ++j) {
        auto& a = anchors[idx[j]];
        a.t_device_s += o.bias_s;
        result.log.outliers.push_back({a.device_id, a.tier, idx[j], a.t_auth_s, o.bias_s});
      }
    }
    std::sort(result.log.outliers.begin(), result.log.outliers.end(),
              [](const auto& a, const auto& b) { return a.anchor_index < b.anchor_index; });
  }

  result.streams = std::move(streams);
  result.anchors = std::move(anchors);
  return result;
}

nlohmann::json to_json(const FaultLog& log) {
  nlohmann::json dropouts = nlohmann::json::array();
  for (const auto& d : log.dropouts) {
    dropouts.push_back({{"stream_id", d.stream_id},
                        {"start_auth_s", d.start_auth_s},
                        {"duration_s", d.duration_s},
                        {"samples_removed", d.samples_removed}});
  }
  nlohmann::json outliers = nlohmann::json::array();
  for (const auto& o : log.outliers) {
    outliers.push_back({{"device_id", o.device_id},
                        {"tier", to_string(o.tier)},
                        {"anchor_index", o.anchor_index},
                        {"t_auth_s", o.t_auth_s},
                        {"bias_s", o.bias_s}});
  }
  return {{"dropouts", std::move(dropouts)}, {"anchor_outliers", std::move(outliers)}};
}

FaultLog fault_log_from_json(const nlohmann::json& doc) {
  FaultLog log;
  for (const auto& d : doc.at("dropouts")) {
    log.dropouts.push_back({d.at("stream_id").get<std::string>(), d.at("start_auth_s").get<double>(),
                            d.at("duration_s").get<double>(),
                            d.at("samples_removed").get<std::size_t>()});
  }
  for (const auto& o : doc.at("anchor_outliers")) {
    const auto tier = parse_tier(o.at("tier").get<std::string>());
    if (!tier) throw Error(ErrorKind::parse, "fault log: unknown tier");
    log.outliers.push_back({o.at("device_id").get<std::string>(), *tier,
                            o.at("anchor_index").get<std::size_t>(), o.at("t_auth_s").get<double>(),
                            o.at("bias_s").get<double>()});
  }
  return log;
}

std::vector<StreamDescriptor> default_stack() {
  std::vector<StreamDescriptor> s;
  for (int p = 1; p <= 4; ++p) {
    const auto P = "P" + std::to_string(p);
    s.push_back({"gaze_" + P, "tobii_" + P, P, Modality::gaze, 100.0,
                 {"gaze_x", "gaze_y", "pupil_left_mm", "pupil_right_mm"}});
  }
  for (int p = 1; p <= 4; ++p) {
    const auto P = "P" + std::to_string(p);
    s.push_back({"physio_" + P, "emotibit_" + P, P, Modality::physio, 25.0,
                 {"eda_us", "ppg", "temperature_c"}});
  }
  for (int p = 1; p <= 4; ++p) {
    const auto P = "P" + std::to_string(p);
    s.push_back({"video_" + P, "cam_desk_" + P, P, Modality::video_frames, 30.0, {"frame_index"}});
  }
  for (int r = 1; r <= 3; ++r) {
    const auto R = std::to_string(r);
    s.push_back({"video_room" + R, "cam_room" + R, "room", Modality::video_frames, 30.0,
                 {"frame_index"}});
  }
  // 48 kHz audio logged once per 1024-sample block.
  for (int p = 1; p <= 4; ++p) {
    const auto P = "P" + std::to_string(p);
    s.push_back({"audio_" + P, "rme_fireface", P, Modality::audio_blocks, 46.875,
                 {"block_index", "block_rms"}});
  }
  s.push_back({"audio_room", "rme_fireface", "room", Modality::audio_blocks, 46.875,
               {"block_index", "block_rms"}});
  s.push_back({"markers", std::string(kHostDevice), "room", Modality::markers, 1.0,
               {"event_index"}});
  return s;
}

std::string format_raw_stream(const SimulatedStream& stream) {
  const auto& d = stream.descriptor;
  const auto& s = stream.samples;
  std::string out = "t_device";
  for (const auto& c : d.channels) {
    out += '\t';
    out += c;
  }
  out += '\n';
  out.reserve(out.size() + s.size() * (12 + 12 * s.channel_count));
  for (std::size_t i = 0; i < s.size(); ++i) {
    tsv::append_fixed6(out, s.times[i]);
    for (double v : s.row(i)) {
      out += '\t';
      tsv::append_fixed6(out, v);
    }
    out += '\n';
  }
  return out;
}

SampleSeries parse_raw_stream(std::string_view text, const StreamDescriptor& desc,
                              std::string_view source_name) {
  tsv::Reader r(text, std::string(source_name));
  std::vector<std::string_view> header{"t_device"};
  for (const auto& c : desc.channels) header.push_back(c);
  r.expect_header(header);
  SampleSeries s;
  s.channel_count = desc.channels.size();
  std::vector<double> row(s.channel_count);
  while (r.next()) {
    const double t = r.number(0);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = r.number(c + 1);
    s.push_back(t, row);
  }
  return s;
}

std::string format_anchors(std::span<const TimeAnchor> anchors) {
  std::string out = "device_id\tt_device_s\tt_auth_s\ttier\tweight\n";
  for (const auto& a : anchors) {
    out += a.device_id;
    out += '\t';
    tsv::append_fixed6(out, a.t_device_s);
    out += '\t';
    tsv::append_fixed6(out, a.t_auth_s);
    out += '\t';
    out += to_string(a.tier);
    out += '\t';
    tsv::append_fixed6(out, a.weight);
    out += '\n';
  }
  return out;
}

std::vector<TimeAnchor> parse_anchors(std::string_view text, std::string_view source_name) {
  tsv::Reader r(text, std::string(source_name));
  r.expect_header({"device_id", "t_device_s", "t_auth_s", "tier", "weight"});
  std::vector<TimeAnchor> out;
  while (r.next()) {
    TimeAnchor a;
    a.device_id = std::string(r.fields()[0]);
    if (a.device_id.empty()) r.fail("empty device_id");
    a.t_device_s = r.number(1);
    a.t_auth_s = r.number(2);
    const auto tier = parse_tier(r.fields()[3]);
    if (!tier || *tier == SourceTier::unaligned) r.fail("unknown tier '" + std::string(r.fields()[3]) + "'");
    a.tier = *tier;
    a.weight = r.number(4);
    if (a.weight < 0.0) r.fail("negative weight");
    out.push_back(std::move(a));
  }
  return out;
}

nlohmann::json to_json(const StreamDescriptor& d) {
  nlohmann::json j{{"stream_id", d.stream_id},
                   {"device_id", d.device_id},
                   {"modality", to_string(d.modality)},
                   {"nominal_rate_hz", d.nominal_rate_hz},
                   {"channels", d.channels}};
  j["participant"] = d.participant ? nlohmann::json(*d.participant) : nlohmann::json(nullptr);
  return j;
}

StreamDescriptor descriptor_from_json(const nlohmann::json& j) {
  StreamDescriptor d;
  try {
    d.stream_id = j.at("stream_id").get<std::string>();
    d.device_id = j.at("device_id").get<std::string>();
    if (j.contains("participant") && !j.at("participant").is_null()) {
      d.participant = j.at("participant").get<std::string>();
    }
    const auto m = parse_modality(j.at("modality").get<std::string>());
    if (!m) throw Error(ErrorKind::configuration, "stream " + d.stream_id + ": unknown modality");
    d.modality = *m;
    d.nominal_rate_hz = j.at("nominal_rate_hz").get<double>();
    d.channels = j.at("channels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::configuration, std::string("malformed stream descriptor: ") + e.what());
  }
  validate(d);
  return d;
}

nlohmann::json to_json(const GroundTruthClock& t) {
  return {{"device_id", t.device_id},
          {"true_offset_s", t.true_offset_s},
          {"true_drift_ppm", t.true_drift_ppm},
          {"jitter_sigma_s", t.jitter_sigma_s},
          {"seed", t.seed}};
}

GroundTruthClock truth_from_json(const nlohmann::json& j) {
  GroundTruthClock t;
  try {
    t.device_id = j.at("device_id").get<std::string>();
    t.true_offset_s = j.value("true_offset_s", 0.0);
    t.true_drift_ppm = j.value("true_drift_ppm", 0.0);
    t.jitter_sigma_s = j.value("jitter_sigma_s", 0.0);
    t.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::configuration, std::string("malformed device clock: ") + e.what());
  }
  validate(t);
  return t;
}

}  // namespace meetsync
