#include "meetsync/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <nlohmann/json.hpp>

#include "meetsync/audio_io.hpp"
#include "meetsync/digest.hpp"
#include "meetsync/packager.hpp"

namespace fs = std::filesystem;

namespace meetsync {

namespace {

constexpr std::string_view kConfig = "sourcedata/config.json";
constexpr std::string_view kProvenance = "sourcedata/provenance.json";
constexpr std::string_view kScenario = "sourcedata/scenario.json";
constexpr std::string_view kEvents = "sourcedata/events.tsv";
constexpr std::string_view kStreams = "sourcedata/streams.json";
constexpr std::string_view kTruth = "sourcedata/ground_truth.json";
constexpr std::string_view kAnchorsFile = "sourcedata/anchors.tsv";
constexpr std::string_view kFaults = "sourcedata/fault_log.json";
constexpr std::string_view kClockModelsFile = "derivatives/clock_models.json";
constexpr std::string_view kTimingFile = "derivatives/timing_report.json";
constexpr std::string_view kQcFile = "derivatives/qc_report.json";

[[noreturn]] void bad_config(const std::string& what) { throw Error(ErrorKind::configuration, what); }

// Reads one JSON object, rejecting keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad_config(path_ + " must be an object");
  }
  ~ObjectReader() = default;

  const nlohmann::json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  template <class T>
  void read(const std::string& key, T& out) {
    if (const auto* v = get(key)) {
      try {
        out = v->get<T>();
      } catch (const nlohmann::json::exception&) {
        bad_config(path_ + "." + key + " has the wrong type");
      }
    }
  }
  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.contains(k)) bad_config("unknown configuration key " + path_ + "." + k);
    }
  }
  std::string sub(const std::string& key) const { return path_ + "." + key; }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

SourceTier tier_from(const nlohmann::json& v, const std::string& where) {
  if (!v.is_string()) bad_config(where + " must hold tier names");
  auto t = parse_tier(v.get<std::string>());
  if (!t || *t == SourceTier::unaligned) bad_config(where + ": unknown tier " + v.dump());
  return *t;
}

nlohmann::json parse_json_file(const fs::path& path, ErrorKind kind) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(kind, path.string() + ": " + e.what());
  }
}

void require_file(const fs::path& root, std::string_view rel, std::string_view stage) {
  if (!fs::exists(root / rel)) {
    throw Error(ErrorKind::not_a_session, (root / rel).string() + " is missing; run `" +
                                              std::string(stage) + "` first");
  }
}

// Stage outputs are write-once: an identical file is accepted, anything else refused.
void put_stage_file(const fs::path& root, std::string_view rel, const std::string& bytes) {
  const auto path = root / rel;
  if (fs::exists(path)) {
    if (read_file(path) == bytes) return;
    throw Error(ErrorKind::io, "refusing to overwrite " + path.string());
  }
  write_file(path, bytes);
}

void say(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

bool is_camera(const StreamDescriptor& d) { return d.modality == Modality::video_frames; }

std::vector<std::string> all_stream_ids() {
  std::vector<std::string> ids;
  for (const auto& d : default_stack()) ids.push_back(d.stream_id);
  return ids;
}

PipelineConfig load_root_config(const fs::path& root) {
  require_file(root, kConfig, "simulate");
  auto cfg = config_from_json(parse_json_file(root / kConfig, ErrorKind::parse));
  cfg.out = root;
  return cfg;
}

std::vector<StreamDescriptor> load_descriptors(const fs::path& root) {
  require_file(root, kStreams, "simulate");
  std::vector<StreamDescriptor> out;
  const auto doc = parse_json_file(root / kStreams, ErrorKind::parse);
  for (const auto& d : doc.at("streams")) {
    out.push_back(descriptor_from_json(d));
  }
  return out;
}

std::string raw_stream_path(const std::string& id) { return "sourcedata/streams/" + id + ".tsv"; }
std::string calibration_rel(const std::string& id) { return "audio/" + id + "_calibration.wav"; }

// One second of noise followed by one second of a 1 kHz tone at -12 dBFS.
PcmBuffer calibration_take(double rate_hz, std::uint64_t seed) {
  PcmBuffer pcm;
  pcm.sample_rate_hz = rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(rate_hz));
  Rng rng(seed);
  pcm.samples.resize(2 * n);
  for (std::size_t i = 0; i < 2 * n; ++i) {
    double x = 0.0025 * rng.normal();
    if (i >= n) x += 0.25 * std::sin(2.0 * std::numbers::pi * 1000.0 * static_cast<double>(i) / rate_hz);
    pcm.samples[i] = x;
  }
  return pcm;
}

}  // namespace

FitMethod PipelineConfig::fit_method() const {
  FitMethod m;
  m.kind = method;
  m.min_anchors_full_model = min_anchors_full_model;
  m.offset_only_fallback = offset_only_fallback;
  m.subsample_seed = derive_seed(seed, "fit/subsample");
  return m;
}

PipelineConfig config_from_json(const nlohmann::json& doc) {
  PipelineConfig c;
  ObjectReader r(doc, "config");
  r.read("seed", c.seed);
  r.read("session_id", c.session_id);
  r.read("scenario", c.scenario);
  if (const auto* u = r.get("untimed_durations")) {
    if (!u->is_object()) bad_config("config.untimed_durations must be an object");
    c.untimed_durations.clear();
    for (const auto& [k, v] : u->items()) {
      if (!v.is_number()) bad_config("config.untimed_durations." + k + " must be a number");
      c.untimed_durations[k] = v.get<double>();
    }
  }
  r.read("block_gap_s", c.block_gap_s);
  r.read("prompts", c.prompts);
  if (const auto* p = r.get("prompt_policy")) {
    ObjectReader pr(*p, r.sub("prompt_policy"));
    pr.read("initial_delay_s", c.prompt_policy.initial_delay_s);
    if (const auto* v = pr.get("periodic_s")) {
      if (v->is_null()) {
        c.prompt_policy.periodic_s.reset();
      } else if (v->is_number()) {
        c.prompt_policy.periodic_s = v->get<double>();
      } else {
        bad_config("config.prompt_policy.periodic_s must be a number or null");
      }
    }
    pr.read("min_spacing_s", c.prompt_policy.min_spacing_s);
    pr.read("end_guard_s", c.prompt_policy.end_guard_s);
    pr.read("trigger_latency_s", c.prompt_policy.trigger_latency_s);
    pr.finish();
  }
  if (const auto* k = r.get("clocks")) {
    ObjectReader kr(*k, r.sub("clocks"));
    kr.read("offset_range_s", c.offset_range_s);
    kr.read("drift_range_ppm", c.drift_range_ppm);
    kr.read("jitter_sigma_s", c.jitter_sigma_s);
    kr.finish();
  }
  if (const auto* d = r.get("devices")) {
    if (!d->is_object()) bad_config("config.devices must be an object");
    for (const auto& [id, v] : d->items()) {
      ObjectReader dr(v, "config.devices." + id);
      DeviceOverride o;
      auto opt = [&](const char* key, std::optional<double>& out) {
        double x = 0.0;
        if (dr.get(key)) {
          dr.read(key, x);
          out = x;
        }
      };
      opt("offset_s", o.offset_s);
      opt("drift_ppm", o.drift_ppm);
      opt("jitter_sigma_s", o.jitter_sigma_s);
      dr.finish();
      c.devices[id] = o;
    }
  }
  if (const auto* a = r.get("anchors")) {
    ObjectReader ar(*a, r.sub("anchors"));
    ar.read("cadence_s", c.anchor_cadence_s);
    if (const auto* t = ar.get("tiers")) {
      if (!t->is_object()) bad_config("config.anchors.tiers must be an object");
      for (const auto& [id, list] : t->items()) {
        const auto where = "config.anchors.tiers." + id;
        if (!list.is_array()) bad_config(where + " must be a list");
        std::vector<SourceTier> tiers;
        for (const auto& x : list) tiers.push_back(tier_from(x, where));
        c.anchor_tiers[id] = std::move(tiers);
      }
    }
    ar.finish();
  }
  if (const auto* f = r.get("faults")) {
    ObjectReader fr(*f, r.sub("faults"));
    if (const auto* ds = fr.get("dropouts")) {
      if (!ds->is_array()) bad_config("config.faults.dropouts must be a list");
      for (const auto& d : *ds) {
        ObjectReader dr(d, "config.faults.dropouts[]");
        DropoutSpec spec;
        dr.read("stream_id", spec.stream_id);
        dr.read("start_auth_s", spec.start_auth_s);
        dr.read("duration_s", spec.duration_s);
        dr.finish();
        c.faults.dropouts.push_back(spec);
      }
    }
    if (const auto* o = fr.get("anchor_outliers")) {
      ObjectReader orr(*o, "config.faults.anchor_outliers");
      orr.read("fraction", c.faults.anchor_outliers.fraction);
      orr.read("bias_s", c.faults.anchor_outliers.bias_s);
      orr.finish();
    }
    fr.finish();
  }
  r.read("disabled_streams", c.disabled_streams);
  r.read("expected_streams", c.expected_streams);
  if (const auto* f = r.get("fit")) {
    ObjectReader fr(*f, r.sub("fit"));
    if (const auto* m = fr.get("method")) {
      const auto kind = m->is_string() ? parse_fit_kind(m->get<std::string>()) : std::nullopt;
      if (!kind) bad_config("config.fit.method must be least_squares or theil_sen");
      c.method = *kind;
    }
    double tol_ms = c.tolerance_s * 1000.0;
    fr.read("tolerance_ms", tol_ms);
    c.tolerance_s = tol_ms / 1000.0;
    fr.read("min_anchors_full_model", c.min_anchors_full_model);
    fr.read("offset_only_fallback", c.offset_only_fallback);
    fr.finish();
  }
  if (const auto* q = r.get("qc")) {
    ObjectReader qr(*q, r.sub("qc"));
    qr.read("max_gap_s", c.qc.max_gap_s);
    qr.read("k_intervals", c.qc.k_intervals);
    qr.finish();
  }
  r.read("calibration_rate_hz", c.calibration_rate_hz);
  r.finish();

  if (c.session_id.empty()) bad_config("config.session_id must not be empty");
  if (!(c.anchor_cadence_s > 0.0)) bad_config("config.anchors.cadence_s must be > 0");
  if (!(c.tolerance_s > 0.0)) bad_config("config.fit.tolerance_ms must be > 0");
  if (!(c.offset_range_s >= 0.0) || !(c.drift_range_ppm >= 0.0) || !(c.drift_range_ppm < 1e6)) {
    bad_config("config.clocks ranges must be non-negative");
  }
  if (!(c.jitter_sigma_s >= 0.0)) bad_config("config.clocks.jitter_sigma_s must be >= 0");
  if (!(c.block_gap_s >= 0.0)) bad_config("config.block_gap_s must be >= 0");
  if (!(c.qc.max_gap_s > 0.0) || !(c.qc.k_intervals >= 2.0)) {
    bad_config("config.qc needs max_gap_s > 0 and k_intervals >= 2");
  }
  if (!(c.calibration_rate_hz >= 1000.0)) bad_config("config.calibration_rate_hz must be >= 1000");
  validate(c.prompt_policy);
  validate(c.faults);

  const auto ids = all_stream_ids();
  auto known_stream = [&](const std::string& id) { return std::find(ids.begin(), ids.end(), id) != ids.end(); };
  for (const auto& id : c.disabled_streams) {
    if (!known_stream(id)) bad_config("config.disabled_streams: unknown stream " + id);
  }
  std::set<std::string> devices;
  for (const auto& d : default_stack()) devices.insert(d.device_id);
  devices.erase(std::string(kHostDevice));
  for (const auto& [id, _] : c.devices) {
    if (!devices.contains(id)) bad_config("config.devices: unknown or fixed device " + id);
  }
  for (const auto& [id, _] : c.anchor_tiers) {
    if (!devices.contains(id)) bad_config("config.anchors.tiers: unknown or fixed device " + id);
  }
  return c;
}

nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json devices = nlohmann::json::object();
  for (const auto& [id, o] : c.devices) {
    nlohmann::json d = nlohmann::json::object();
    if (o.offset_s) d["offset_s"] = *o.offset_s;
    if (o.drift_ppm) d["drift_ppm"] = *o.drift_ppm;
    if (o.jitter_sigma_s) d["jitter_sigma_s"] = *o.jitter_sigma_s;
    devices[id] = std::move(d);
  }
  nlohmann::json tiers = nlohmann::json::object();
  for (const auto& [id, list] : c.anchor_tiers) {
    nlohmann::json l = nlohmann::json::array();
    for (auto t : list) l.push_back(to_string(t));
    tiers[id] = std::move(l);
  }
  nlohmann::json dropouts = nlohmann::json::array();
  for (const auto& d : c.faults.dropouts) {
    dropouts.push_back({{"stream_id", d.stream_id}, {"start_auth_s", d.start_auth_s}, {"duration_s", d.duration_s}});
  }
  nlohmann::json untimed = nlohmann::json::object();
  for (const auto& [k, v] : c.untimed_durations) untimed[k] = v;
  const auto& p = c.prompt_policy;
  return {
      {"seed", c.seed},
      {"session_id", c.session_id},
      {"scenario", c.scenario},
      {"untimed_durations", std::move(untimed)},
      {"block_gap_s", c.block_gap_s},
      {"prompts", c.prompts},
      {"prompt_policy",
       {{"initial_delay_s", p.initial_delay_s},
        {"periodic_s", p.periodic_s ? nlohmann::json(*p.periodic_s) : nlohmann::json(nullptr)},
        {"min_spacing_s", p.min_spacing_s},
        {"end_guard_s", p.end_guard_s},
        {"trigger_latency_s", p.trigger_latency_s}}},
      {"clocks",
       {{"offset_range_s", c.offset_range_s},
        {"drift_range_ppm", c.drift_range_ppm},
        {"jitter_sigma_s", c.jitter_sigma_s}}},
      {"devices", std::move(devices)},
      {"anchors", {{"cadence_s", c.anchor_cadence_s}, {"tiers", std::move(tiers)}}},
      {"faults",
       {{"dropouts", std::move(dropouts)},
        {"anchor_outliers",
         {{"fraction", c.faults.anchor_outliers.fraction}, {"bias_s", c.faults.anchor_outliers.bias_s}}}}},
      {"disabled_streams", c.disabled_streams},
      {"expected_streams", c.expected_streams},
      {"fit",
       {{"method", to_string(c.method)},
        {"tolerance_ms", c.tolerance_s * 1000.0},
        {"min_anchors_full_model", c.min_anchors_full_model},
        {"offset_only_fallback", c.offset_only_fallback}}},
      {"qc", {{"max_gap_s", c.qc.max_gap_s}, {"k_intervals", c.qc.k_intervals}}},
      {"calibration_rate_hz", c.calibration_rate_hz},
  };
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) bad_config("configuration file " + path.string() + " does not exist");
  return config_from_json(parse_json_file(path, ErrorKind::configuration));
}

SimulatedSession simulate_session(const PipelineConfig& cfg) {
  SimulatedSession s;
  if (cfg.scenario == "default") {
    s.scenario = default_scenario();
  } else {
    if (!fs::exists(cfg.scenario)) bad_config("scenario file " + cfg.scenario + " does not exist");
    s.scenario = scenario_from_json(parse_json_file(cfg.scenario, ErrorKind::configuration));
  }
  validate(s.scenario);

  s.events = run_scenario(s.scenario, cfg.untimed_durations, cfg.block_gap_s);
  for (const auto& e : s.events) {
    if (e.event_type == "session_end") s.session_end_s = e.onset_s;
  }
  if (cfg.prompts) {
    auto prompts = schedule_prompts(s.events, s.scenario, cfg.prompt_policy);
    s.events.insert(s.events.end(), prompts.begin(), prompts.end());
    sort_spine(s.events);
  }

  std::vector<StreamDescriptor> stack;
  for (auto& d : default_stack()) {
    if (std::find(cfg.disabled_streams.begin(), cfg.disabled_streams.end(), d.stream_id) ==
        cfg.disabled_streams.end()) {
      stack.push_back(std::move(d));
    }
  }

  // Clocks for every device of the full stack, so disabling a stream never
  // changes the other devices' draws.
  std::vector<std::string> device_order;
  for (const auto& d : default_stack()) {
    if (d.device_id != kHostDevice &&
        std::find(device_order.begin(), device_order.end(), d.device_id) == device_order.end()) {
      device_order.push_back(d.device_id);
    }
  }
  GroundTruthClock host{std::string(kHostDevice), 0.0, 0.0, 0.0, derive_seed(cfg.seed, "clock/host")};
  std::map<std::string, GroundTruthClock> by_device;
  for (const auto& id : device_order) {
    Rng rng(derive_seed(cfg.seed, "truth/" + id));
    GroundTruthClock t{id, rng.uniform(-cfg.offset_range_s, cfg.offset_range_s),
                       rng.uniform(-cfg.drift_range_ppm, cfg.drift_range_ppm), cfg.jitter_sigma_s,
                       derive_seed(cfg.seed, "clock/" + id)};
    if (auto it = cfg.devices.find(id); it != cfg.devices.end()) {
      if (it->second.offset_s) t.true_offset_s = *it->second.offset_s;
      if (it->second.drift_ppm) t.true_drift_ppm = *it->second.drift_ppm;
      if (it->second.jitter_sigma_s) t.jitter_sigma_s = *it->second.jitter_sigma_s;
    }
    validate(t);
    by_device.emplace(id, t);
  }

  std::set<std::string> active;
  for (const auto& d : stack) active.insert(d.device_id);
  for (const auto& id : device_order) {
    if (active.contains(id)) s.truths.push_back(by_device.at(id));
  }
  s.truths.push_back(host);

  const auto waveform_seed = derive_seed(cfg.seed, "waveforms");
  for (const auto& d : stack) {
    if (d.modality == Modality::markers) {
      s.streams.push_back(generate_marker_stream(d, host, s.events));
    } else {
      s.streams.push_back(generate_stream(d, by_device.at(d.device_id), 0.0, s.session_end_s, waveform_seed));
    }
  }

  std::map<std::string, std::vector<SourceTier>> tiers;
  for (const auto& d : stack) {
    if (d.device_id == kHostDevice || tiers.contains(d.device_id)) continue;
    if (auto it = cfg.anchor_tiers.find(d.device_id); it != cfg.anchor_tiers.end()) {
      tiers[d.device_id] = it->second;
    } else if (is_camera(d)) {
      tiers[d.device_id] = {SourceTier::lsl, SourceTier::frame_log, SourceTier::sidecar};
    } else {
      tiers[d.device_id] = {SourceTier::lsl};
    }
  }
  const auto pulses = pulse_schedule(0.0, s.session_end_s, cfg.anchor_cadence_s);
  std::vector<TimeAnchor> anchors;
  for (auto tier : {SourceTier::lsl, SourceTier::event_log, SourceTier::frame_log, SourceTier::sidecar}) {
    std::vector<GroundTruthClock> subset;
    for (const auto& t : s.truths) {
      auto it = tiers.find(t.device_id);
      if (it != tiers.end() && std::find(it->second.begin(), it->second.end(), tier) != it->second.end()) {
        subset.push_back(t);
      }
    }
    auto batch = emit_anchor_pulses(pulses, subset, tier);
    anchors.insert(anchors.end(), batch.begin(), batch.end());
  }

  auto faulted = inject_faults(std::move(s.streams), std::move(anchors), cfg.faults,
                               derive_seed(cfg.seed, "faults"), s.session_end_s);
  s.streams = std::move(faulted.streams);
  s.anchors = std::move(faulted.anchors);
  s.fault_log = std::move(faulted.log);

  // The logger's own evidence: every distinct spine onset, read on the host clock.
  std::set<double> onsets;
  for (const auto& e : s.events) onsets.insert(e.onset_s);
  for (double t : onsets) {
    s.anchors.push_back({std::string(kHostDevice), device_time(host, t), t, SourceTier::event_log, 1.0});
  }
  return s;
}

void stage_simulate(const PipelineConfig& cfg, const Progress& progress) {
  if (cfg.out.empty()) bad_config("an output root is required");
  const auto& root = cfg.out;
  std::error_code ec;
  if (fs::exists(root, ec) && !fs::is_empty(root, ec)) {
    throw Error(ErrorKind::io, "refusing to simulate into non-empty root " + root.string());
  }
  say(progress, "simulate: generating session (seed " + std::to_string(cfg.seed) + ")");
  const auto s = simulate_session(cfg);

  std::map<std::string, std::string> files;
  const auto config_text = dump_json(to_json(cfg));
  files[std::string(kConfig)] = config_text;
  files[std::string(kProvenance)] = dump_json({{"config_sha256", sha256_hex(config_text)},
                                               {"seed", cfg.seed},
                                               {"tool", kToolName},
                                               {"tool_version", tool_version()}});
  files[std::string(kScenario)] = dump_json(to_json(s.scenario));
  files[std::string(kEvents)] = format_events(s.events);
  nlohmann::json descs = nlohmann::json::array();
  for (const auto& st : s.streams) descs.push_back(to_json(st.descriptor));
  files[std::string(kStreams)] = dump_json({{"streams", std::move(descs)}});
  nlohmann::json truths = nlohmann::json::array();
  for (const auto& t : s.truths) truths.push_back(to_json(t));
  files[std::string(kTruth)] = dump_json({{"clocks", std::move(truths)}});
  files[std::string(kAnchorsFile)] = format_anchors(s.anchors);
  files[std::string(kFaults)] = dump_json(to_json(s.fault_log));
  for (const auto& st : s.streams) {
    files[raw_stream_path(st.descriptor.stream_id)] = format_raw_stream(st);
    if (st.descriptor.modality == Modality::audio_blocks) {
      const auto pcm = calibration_take(cfg.calibration_rate_hz,
                                        derive_seed(cfg.seed, "calibration/" + st.descriptor.stream_id));
      files["sourcedata/" + calibration_rel(st.descriptor.stream_id)] = encode_wav16(pcm);
    }
  }
  for (const auto& [rel, bytes] : files) write_file(root / rel, bytes);
  say(progress, "simulate: wrote " + std::to_string(files.size()) + " files under " +
                    (root / "sourcedata").string());
}

TimingReport stage_align(const fs::path& root, const StageOverrides& overrides, const Progress& progress) {
  auto cfg = load_root_config(root);
  if (overrides.tolerance_s) cfg.tolerance_s = *overrides.tolerance_s;
  if (overrides.method) cfg.method = *overrides.method;
  if (!(cfg.tolerance_s > 0.0)) bad_config("tolerance must be > 0");
  const auto method = cfg.fit_method();

  require_file(root, kAnchorsFile, "simulate");
  const auto anchors = parse_anchors(read_file(root / kAnchorsFile), (root / kAnchorsFile).string());
  const AnchorPool pool(anchors);

  std::set<std::string> devices;
  for (const auto& d : load_descriptors(root)) devices.insert(d.device_id);
  devices.insert(std::string(kHostDevice));

  SessionBundle b;
  for (const auto& id : devices) {
    if (id == kHostDevice) {
      const auto n = pool.anchors(id, SourceTier::event_log).size();
      b.models.emplace(id, identity_model(id, SourceTier::event_log, n));
      continue;
    }
    auto fit = fit_with_repair(id, pool, method, cfg.tolerance_s);
    if (!fit.demoted_from.empty()) b.demotions.emplace(id, fit.demoted_from);
    say(progress, "align: " + id + " -> " + std::string(to_string(fit.model.source_tier)) + ", " +
                      std::to_string(fit.model.anchor_count) + " anchors");
    b.models.emplace(id, std::move(fit.model));
  }
  std::vector<ClockModel> models;
  for (const auto& [_, m] : b.models) models.push_back(m);
  auto report = validate_session_alignment(models, pool, cfg.tolerance_s);

  put_stage_file(root, kClockModelsFile, render_clock_models(b));
  put_stage_file(root, kTimingFile, dump_json(to_json(report)));
  say(progress, std::string("align: timing ") + (report.all_pass() ? "passes" : "FAILS") + " at " +
                    std::to_string(cfg.tolerance_s * 1000.0) + " ms");
  return report;
}

SessionManifest stage_package(const fs::path& root, const Progress& progress) {
  const auto cfg = load_root_config(root);
  require_file(root, kClockModelsFile, "align");
  require_file(root, kTimingFile, "align");

  SessionBundle b;
  b.session_id = cfg.session_id;
  const auto src = root / "sourcedata";
  for (auto it = fs::recursive_directory_iterator(src); it != fs::recursive_directory_iterator(); ++it) {
    if (it->is_regular_file()) {
      b.sourcedata.emplace(fs::relative(it->path(), src).generic_string(), read_file(it->path()));
    }
  }
  auto source = [&](std::string_view rel) -> const std::string& {
    auto key = std::string(rel.substr(std::string_view("sourcedata/").size()));
    auto it = b.sourcedata.find(key);
    if (it == b.sourcedata.end()) throw Error(ErrorKind::not_a_session, (root / rel).string() + " is missing");
    return it->second;
  };

  b.scenario = scenario_from_json(nlohmann::json::parse(source(kScenario)));
  b.events = parse_events(source(kEvents), (root / kEvents).string());
  b.anchors = parse_anchors(source(kAnchorsFile), (root / kAnchorsFile).string());
  b.fault_log = fault_log_from_json(nlohmann::json::parse(source(kFaults)));
  b.expected_streams = cfg.expected_streams.empty() ? all_stream_ids() : cfg.expected_streams;

  const auto models_doc = parse_json_file(root / kClockModelsFile, ErrorKind::parse);
  for (const auto& d : models_doc.at("devices")) {
    auto m = clock_model_from_json(d.at("model"));
    std::vector<SourceTier> demoted;
    for (const auto& t : d.at("demoted_from")) demoted.push_back(*parse_tier(t.get<std::string>()));
    if (!demoted.empty()) b.demotions.emplace(m.device_id, std::move(demoted));
    const auto id = m.device_id;
    b.models.emplace(id, std::move(m));
  }
  b.timing = timing_report_from_json(parse_json_file(root / kTimingFile, ErrorKind::parse));

  for (const auto& desc : load_descriptors(root)) {
    const auto rel = raw_stream_path(desc.stream_id);
    const auto raw = parse_raw_stream(source(rel), desc, (root / rel).string());
    BundleStream s{desc, {}};
    s.samples.channel_count = desc.channels.size();
    auto m = b.models.find(desc.device_id);
    if (m != b.models.end() && m->second.aligned()) {
      s.samples = align_stream(raw, m->second);
    } else {
      say(progress, "package: " + desc.stream_id + " left unaligned (no clock model)");
    }
    b.streams.emplace(desc.stream_id, std::move(s));
  }
  canonicalize(b);
  auto manifest = write_session(root, b);
  say(progress, "package: " + std::to_string(manifest.entries.size()) + " files in manifest");
  return manifest;
}

Summary stage_qc(const fs::path& root, const Progress& progress) {
  const auto cfg = load_root_config(root);
  auto b = read_session(root);

  std::vector<std::string> discovered;
  for (const auto& [id, _] : b.streams) discovered.push_back(id);
  const auto pre = preflight(b.expected_streams, discovered);

  GapReport gaps;
  for (const auto& [id, s] : b.streams) {
    if (!s.descriptor.regular() || !b.stream_aligned(id)) continue;
    gaps[id] = detect_gaps(s.samples.times, s.descriptor.nominal_rate_hz, cfg.qc.k_intervals);
  }

  std::vector<AudioQC> audio;
  for (const auto& [id, s] : b.streams) {
    if (s.descriptor.modality != Modality::audio_blocks) continue;
    auto it = b.sourcedata.find(calibration_rel(id));
    if (it == b.sourcedata.end()) continue;
    const auto pcm = decode_wav16(it->second, calibration_rel(id));
    auto q = audio_metrics(pcm.samples, pcm.sample_rate_hz, TimeWindow{0.0, 1.0}, TimeWindow{1.0, 2.0});
    q.channel = id;
    audio.push_back(std::move(q));
  }

  const TimingReport timing = b.timing.value_or(TimingReport{});
  auto summary = session_summary(b, timing, gaps, pre, audio, cfg.qc);
  b.qc = summary.document();
  put_stage_file(root, kQcFile, dump_json(*b.qc));
  refresh_manifest(root, b);
  for (const auto& f : summary.findings) {
    say(progress, "qc: " + std::string(to_string(f.severity)) + " " + f.code + ": " + f.message);
  }
  say(progress, "qc: status " + std::string(to_string(summary.status)));
  return summary;
}

int run_end_to_end(const PipelineConfig& cfg, const Progress& progress) {
  stage_simulate(cfg, progress);
  stage_align(cfg.out, {}, progress);
  stage_package(cfg.out, progress);
  return stage_qc(cfg.out, progress).exit_code;
}

int exit_code_for(const Error& error) noexcept {
  return error.kind() == ErrorKind::configuration ? kExitUsage : kExitIo;
}

}  // namespace meetsync
