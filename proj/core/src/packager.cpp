#include "meetsync/packager.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "meetsync/digest.hpp"
#include "meetsync/error.hpp"
#include "meetsync/syncfit.hpp"
#include "meetsync/tsv.hpp"

#ifndef MEETSYNC_VERSION
#define MEETSYNC_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace meetsync {

namespace {

constexpr std::string_view kManifest = "manifest.json";
constexpr std::string_view kSourcedata = "sourcedata/";
constexpr std::string_view kDerivatives = "derivatives/";
constexpr std::string_view kClockModels = "derivatives/clock_models.json";
constexpr std::string_view kTimingReport = "derivatives/timing_report.json";
constexpr std::string_view kQcReport = "derivatives/qc_report.json";
constexpr std::string_view kMapping = "derivatives/participant_mapping.tsv";
constexpr std::string_view kAnchors = "anchors.tsv";
constexpr std::string_view kFaultLog = "fault_log.json";

const std::vector<std::string_view> kEventColumns{"onset", "duration", "task", "phase",
                                                  "participant", "stream", "event_type", "value"};

std::string events_path(const std::string& session_id) { return "ses-" + session_id + "_events.tsv"; }
std::string session_json_path(const std::string& session_id) {
  return "ses-" + session_id + "_session.json";
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}
bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

double quantize(double x) { return *tsv::parse_number(tsv::fixed6(x)); }

long long micros(double t) { return std::llround(t * 1e6); }

void put_text(std::string& out, const std::optional<std::string>& v) {
  out += v ? std::string_view(*v) : tsv::kNA;
}

std::string relative_key(const fs::path& root, const fs::path& file) {
  return fs::relative(file, root).generic_string();
}

std::vector<std::string> scan_files(const fs::path& root) {
  std::vector<std::string> out;
  std::error_code ec;
  if (!fs::exists(root, ec)) return out;
  for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_regular_file()) out.push_back(relative_key(root, it->path()));
  }
  if (ec) throw Error(ErrorKind::io, "cannot scan " + root.string() + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

nlohmann::json parse_json_text(std::string_view text, std::string_view source) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string(source) + ": " + e.what());
  }
}

std::map<std::string, Completeness> completeness_of(const SessionBundle& b) {
  std::map<std::string, Completeness> out;
  for (const auto& id : b.expected_streams) out[id] = Completeness::missing;
  for (const auto& [id, s] : b.streams) {
    bool partial = !b.stream_aligned(id);
    if (b.qc && b.qc->contains("gaps")) {
      const auto& g = (*b.qc)["gaps"];
      if (g.contains(id) && !g[id].value("gaps", nlohmann::json::array()).empty()) partial = true;
    }
    out[id] = partial ? Completeness::partial : Completeness::present;
  }
  return out;
}

SessionManifest build_manifest(const fs::path& root, const SessionBundle& bundle) {
  SessionManifest m;
  m.created_with = created_with();
  m.stream_completeness = completeness_of(bundle);
  for (const auto& rel : scan_files(root)) {
    if (rel == kManifest) continue;
    const auto bytes = read_file(root / rel);
    m.entries.push_back({rel, bytes.size(), sha256_hex(bytes)});
  }
  return m;
}

nlohmann::json sidecar_json(const SessionBundle& b, const BundleStream& s) {
  const auto it = b.models.find(s.descriptor.device_id);
  const ClockModel model = it != b.models.end() ? it->second : ClockModel{s.descriptor.device_id};
  return {{"descriptor", to_json(s.descriptor)},
          {"clock_model", to_json(model)},
          {"source_tier", to_string(model.source_tier)},
          {"time_column", "t_auth"},
          {"timebase", "seconds on the session clock (protocol event logger), t=0 at session_start"}};
}

nlohmann::json dataset_description(const SessionBundle& b) {
  return {
      {"Name", "meetsync session " + b.session_id},
      {"BIDSVersion", "1.8.0"},
      {"DatasetType", "raw"},
      {"GeneratedBy", nlohmann::json::array({{{"Name", kToolName}, {"Version", tool_version()}}})},
      {"LocalConventions",
       {{"layout",
         "session-rooted: one group session holds all participants; sub-<P>/<modality>/ per "
         "participant, room/<modality>/ for room-level streams"},
        {"timebase",
         "all onsets and sample times are seconds on the protocol event logger's host clock, "
         "t=0 at session_start; device clocks are mapped through affine clock models"},
        {"numbers", "fixed-point with six decimals in TSV files; n/a marks absent values"},
        {"eye_tracking_sidecars", "local convention informed by draft extension BEP020"},
        {"motion_sidecars", "local convention informed by draft extension BEP029"},
        {"physiology_sidecars", "local convention (descriptor, clock_model, source_tier)"},
        {"sourcedata", "raw simulator/vendor files, never rewritten"}}},
  };
}

nlohmann::json clock_models_json(const SessionBundle& b) {
  nlohmann::json devices = nlohmann::json::array();
  for (const auto& [id, m] : b.models) {
    nlohmann::json demoted = nlohmann::json::array();
    if (auto it = b.demotions.find(id); it != b.demotions.end()) {
      for (auto t : it->second) demoted.push_back(to_string(t));
    }
    devices.push_back({{"model", to_json(m)}, {"demoted_from", std::move(demoted)}});
  }
  return {{"devices", std::move(devices)}};
}

void validate_bundle(const SessionBundle& b) {
  if (b.session_id.empty() || b.session_id.find_first_of("/\\_ \t") != std::string::npos) {
    throw Error(ErrorKind::structural, "invalid session id '" + b.session_id + "'");
  }
  for (std::size_t i = 0; i < b.events.size(); ++i) {
    const auto& e = b.events[i];
    if (!(e.onset_s >= 0.0) || (e.duration_s && !(*e.duration_s >= 0.0))) {
      throw Error(ErrorKind::structural, "event " + std::to_string(i) + " has negative time");
    }
    if (i > 0 && e.onset_s < b.events[i - 1].onset_s) {
      throw Error(ErrorKind::structural, "events are not sorted by onset");
    }
  }
  std::set<std::string> missing;
  if (b.qc && b.qc->contains("preflight")) {
    for (const auto& f : (*b.qc)["preflight"].value("missing", nlohmann::json::array())) {
      missing.insert(f.get<std::string>());
    }
  }
  for (const auto& e : b.events) {
    if (e.stream && !b.streams.contains(*e.stream) && !missing.contains(*e.stream)) {
      throw Error(ErrorKind::structural,
                  "event references stream '" + *e.stream + "' which is neither present nor reported missing");
    }
  }
  for (const auto& [id, s] : b.streams) {
    if (id != s.descriptor.stream_id) {
      throw Error(ErrorKind::structural, "stream key '" + id + "' does not match its descriptor");
    }
    if (s.samples.channel_count != s.descriptor.channels.size() ||
        s.samples.values.size() != s.samples.size() * s.samples.channel_count) {
      throw Error(ErrorKind::structural, "stream '" + id + "' has a ragged sample table");
    }
  }
}

// Writes `files` under root, refusing to touch anything unexpected. Existing
// byte-identical files under sourcedata/ or derivatives/ are left in place.
void commit_files(const fs::path& root, const std::map<std::string, std::string>& files,
                  bool allow_foreign_stage_files) {
  std::set<std::string> skip;
  for (const auto& rel : scan_files(root)) {
    const bool stage_area = starts_with(rel, kSourcedata) || starts_with(rel, kDerivatives);
    if (!stage_area && !allow_foreign_stage_files) {
      throw Error(ErrorKind::io, "refusing to write into non-empty session root " + root.string() +
                                     " (found " + rel + ")");
    }
    auto it = files.find(rel);
    if (it == files.end()) continue;
    if (read_file(root / rel) != it->second) {
      throw Error(ErrorKind::io, "refusing to overwrite " + (root / rel).string());
    }
    skip.insert(rel);
  }
  for (const auto& [rel, bytes] : files) {
    if (!skip.contains(rel)) write_file(root / rel, bytes);
  }
}

std::optional<std::string> find_events_file(const SessionManifest& m) {
  for (const auto& e : m.entries) {
    const auto& p = e.relative_path;
    if (p.find('/') == std::string::npos && starts_with(p, "ses-") && ends_with(p, "_events.tsv")) {
      return p;
    }
  }
  return std::nullopt;
}

}  // namespace

std::string render_clock_models(const SessionBundle& bundle) {
  return dump_json(clock_models_json(bundle));
}

std::string_view tool_version() noexcept { return MEETSYNC_VERSION; }

std::string created_with() { return std::string(kToolName) + " " + std::string(tool_version()); }

bool SessionBundle::stream_aligned(const std::string& stream_id) const {
  auto s = streams.find(stream_id);
  if (s == streams.end()) return false;
  auto m = models.find(s->second.descriptor.device_id);
  return m != models.end() && m->second.aligned();
}

bool same_content(const SessionBundle& a, const SessionBundle& b) {
  return a.session_id == b.session_id && a.scenario == b.scenario && a.events == b.events &&
         a.streams == b.streams && a.anchors == b.anchors && a.models == b.models &&
         a.demotions == b.demotions && a.timing == b.timing && a.fault_log == b.fault_log &&
         a.qc == b.qc && a.expected_streams == b.expected_streams && a.sourcedata == b.sourcedata;
}

void canonicalize(SessionBundle& b) {
  for (auto& e : b.events) {
    e.onset_s = quantize(e.onset_s);
    if (e.duration_s) e.duration_s = quantize(*e.duration_s);
  }
  for (auto& [_, s] : b.streams) {
    for (auto& t : s.samples.times) t = quantize(t);
    for (auto& v : s.samples.values) v = quantize(v);
  }
  for (auto& a : b.anchors) {
    a.t_device_s = quantize(a.t_device_s);
    a.t_auth_s = quantize(a.t_auth_s);
    a.weight = quantize(a.weight);
  }
}

std::string_view to_string(Completeness c) noexcept {
  switch (c) {
    case Completeness::present: return "present";
    case Completeness::missing: return "missing";
    case Completeness::partial: return "partial";
  }
  return "missing";
}

nlohmann::json to_json(const SessionManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"relative_path", e.relative_path},
                       {"byte_size", e.byte_size},
                       {"sha256_hex", e.sha256_hex}});
  }
  nlohmann::json completeness = nlohmann::json::object();
  for (const auto& [id, c] : m.stream_completeness) completeness[id] = to_string(c);
  return {{"entries", std::move(entries)},
          {"stream_completeness", std::move(completeness)},
          {"created_with", m.created_with}};
}

SessionManifest manifest_from_json(const nlohmann::json& j) {
  SessionManifest m;
  try {
    m.created_with = j.at("created_with").get<std::string>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("relative_path").get<std::string>(),
                           e.at("byte_size").get<std::uintmax_t>(),
                           e.at("sha256_hex").get<std::string>()});
    }
    for (const auto& [id, c] : j.at("stream_completeness").items()) {
      const auto text = c.get<std::string>();
      Completeness v = Completeness::missing;
      if (text == "present") v = Completeness::present;
      else if (text == "partial") v = Completeness::partial;
      else if (text != "missing") throw Error(ErrorKind::parse, "manifest: bad completeness '" + text + "'");
      m.stream_completeness[id] = v;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("manifest.json: ") + e.what());
  }
  for (const auto& e : m.entries) {
    const bool hex = e.sha256_hex.size() == 64 &&
                     std::all_of(e.sha256_hex.begin(), e.sha256_hex.end(), [](char c) {
                       return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
                     });
    if (!hex) throw Error(ErrorKind::parse, "manifest.json: bad hash for " + e.relative_path);
    if (e.relative_path.empty() || e.relative_path.front() == '/' ||
        e.relative_path.find("..") != std::string::npos) {
      throw Error(ErrorKind::parse, "manifest.json: path is not relative: " + e.relative_path);
    }
  }
  return m;
}

std::string dump_json(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

std::string format_events(const std::vector<EventRecord>& events) {
  std::string out = "onset\tduration\ttask\tphase\tparticipant\tstream\tevent_type\tvalue\n";
  for (const auto& e : events) {
    tsv::append_fixed6(out, e.onset_s);
    out += '\t';
    if (e.duration_s) {
      tsv::append_fixed6(out, *e.duration_s);
    } else {
      out += tsv::kNA;
    }
    for (const auto* f : {&e.task, &e.phase, &e.participant, &e.stream}) {
      out += '\t';
      put_text(out, *f);
    }
    out += '\t';
    out += e.event_type;
    out += '\t';
    put_text(out, e.value);
    out += '\n';
  }
  return out;
}

std::vector<EventRecord> parse_events(std::string_view text, std::string_view source_name) {
  tsv::Reader r(text, std::string(source_name));
  r.expect_header(kEventColumns);
  std::vector<EventRecord> out;
  while (r.next()) {
    EventRecord e;
    e.onset_s = r.number(0);
    if (e.onset_s < 0) r.fail("negative onset");
    e.duration_s = r.optional_number(1);
    if (e.duration_s && *e.duration_s < 0) r.fail("negative duration");
    e.task = r.optional_text(2);
    e.phase = r.optional_text(3);
    e.participant = r.optional_text(4);
    e.stream = r.optional_text(5);
    const auto type = r.optional_text(6);
    if (!type) r.fail("event_type is required");
    e.event_type = *type;
    e.value = r.optional_text(7);
    if (!out.empty() && e.onset_s < out.back().onset_s) r.fail("onsets are not sorted");
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_aligned(const BundleStream& stream) {
  std::string out = "t_auth";
  for (const auto& c : stream.descriptor.channels) {
    out += '\t';
    out += c;
  }
  out += '\n';
  const auto& s = stream.samples;
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

SampleSeries parse_aligned(std::string_view text, const StreamDescriptor& desc,
                           std::string_view source_name) {
  tsv::Reader r(text, std::string(source_name));
  std::vector<std::string_view> header{"t_auth"};
  for (const auto& c : desc.channels) header.push_back(c);
  r.expect_header(header);
  SampleSeries s;
  s.channel_count = desc.channels.size();
  std::vector<double> row(s.channel_count);
  while (r.next()) {
    const double t = r.number(0);
    if (!s.empty() && t < s.times.back()) r.fail("sample times are not sorted");
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = r.number(c + 1);
    s.push_back(t, row);
  }
  return s;
}

std::string stream_data_path(const StreamDescriptor& d) {
  if (!d.participant) {
    throw Error(ErrorKind::structural, "stream '" + d.stream_id + "' has no participant label");
  }
  const auto modality = std::string(to_string(d.modality));
  if (*d.participant == "room") {
    return "room/" + modality + "/room_" + modality + "_" + d.stream_id + ".tsv";
  }
  const auto sub = "sub-" + *d.participant;
  return sub + "/" + modality + "/" + sub + "_" + modality + "_" + d.stream_id + ".tsv";
}

std::string render_participant_mapping(const SessionBundle& bundle) {
  std::vector<std::array<std::string, 4>> rows;
  for (const auto& [id, s] : bundle.streams) {
    const auto& d = s.descriptor;
    if (!d.participant) {
      throw Error(ErrorKind::structural, "stream '" + id + "' has no participant label");
    }
    rows.push_back({*d.participant, d.stream_id, d.device_id, std::string(to_string(d.modality))});
  }
  std::sort(rows.begin(), rows.end());
  std::string out = "participant\tstream_id\tdevice_id\tmodality\n";
  for (const auto& r : rows) {
    out += r[0] + '\t' + r[1] + '\t' + r[2] + '\t' + r[3] + '\n';
  }
  return out;
}

fs::path write_participant_mapping(const fs::path& root, const SessionBundle& bundle) {
  const auto text = render_participant_mapping(bundle);
  commit_files(root, {{std::string(kMapping), text}}, true);
  return root / kMapping;
}

std::vector<RunSlice> slice_runs(const SessionBundle& bundle) {
  std::vector<std::string> tasks;
  if (bundle.scenario) {
    for (const auto& b : bundle.scenario->blocks) tasks.emplace_back(to_string(b.task_id));
  } else {
    for (const auto& e : bundle.events) {
      if ((e.event_type == "block_start" || e.event_type == "block_end") && e.task &&
          std::find(tasks.begin(), tasks.end(), *e.task) == tasks.end()) {
        tasks.push_back(*e.task);
      }
    }
  }

  std::vector<RunSlice> out;
  for (const auto& task : tasks) {
    std::optional<double> start, end;
    for (const auto& e : bundle.events) {
      if (e.task != task) continue;
      if (e.event_type == "block_start" && !start) start = e.onset_s;
      if (e.event_type == "block_end" && !end) end = e.onset_s;
    }
    if (!start || !end) {
      throw Error(ErrorKind::structural, "task " + task + " lacks block_start/block_end in the spine");
    }
    RunSlice slice{task, *start, *end, {}};
    const auto lo = micros(*start);
    const auto hi = micros(*end);
    for (const auto& [id, s] : bundle.streams) {
      const auto& t = s.samples.times;
      auto first = std::partition_point(t.begin(), t.end(), [&](double x) { return micros(x) < lo; });
      auto last = std::partition_point(first, t.end(), [&](double x) { return micros(x) < hi; });
      slice.ranges[id] = {static_cast<std::size_t>(first - t.begin()),
                          static_cast<std::size_t>(last - t.begin())};
    }
    out.push_back(std::move(slice));
  }
  return out;
}

std::map<std::string, std::string> render_slices(const SessionBundle& bundle,
                                                 const std::vector<RunSlice>& slices) {
  std::map<std::string, std::string> files;
  std::string runs = "task\tstart\tend\tduration\n";
  for (const auto& s : slices) {
    runs += s.task_id + '\t' + tsv::fixed6(s.start_auth_s) + '\t' + tsv::fixed6(s.end_auth_s) +
            '\t' + tsv::fixed6(s.end_auth_s - s.start_auth_s) + '\n';

    std::vector<EventRecord> local;
    const auto lo = micros(s.start_auth_s);
    const auto hi = micros(s.end_auth_s);
    for (auto e : bundle.events) {
      const auto t = micros(e.onset_s);
      if (t < lo || t >= hi) continue;
      e.onset_s = quantize(e.onset_s - s.start_auth_s);
      local.push_back(std::move(e));
    }
    files["derivatives/slices/task-" + s.task_id + "_events.tsv"] = format_events(local);

    std::string ranges = "stream_id\tstart_index\tend_index\tsample_count\n";
    for (const auto& [id, r] : s.ranges) {
      ranges += id + '\t' + std::to_string(r.begin) + '\t' + std::to_string(r.end) + '\t' +
                std::to_string(r.size()) + '\n';
    }
    files["derivatives/slices/task-" + s.task_id + "_ranges.tsv"] = std::move(ranges);
  }
  files["derivatives/slices/runs.tsv"] = std::move(runs);
  return files;
}

std::vector<RunSlice> write_slices(const fs::path& root, const SessionBundle& bundle) {
  auto slices = slice_runs(bundle);
  commit_files(root, render_slices(bundle, slices), true);
  refresh_manifest(root, bundle);
  return slices;
}

SessionManifest write_session(const fs::path& root, const SessionBundle& bundle) {
  validate_bundle(bundle);

  std::map<std::string, std::string> files;
  files["dataset_description.json"] = dump_json(dataset_description(bundle));
  files[events_path(bundle.session_id)] = format_events(bundle.events);

  nlohmann::json session{{"session_id", bundle.session_id},
                         {"expected_streams", bundle.expected_streams}};
  session["scenario"] = bundle.scenario ? to_json(*bundle.scenario) : nlohmann::json(nullptr);
  files[session_json_path(bundle.session_id)] = dump_json(session);

  for (const auto& [id, s] : bundle.streams) {
    const auto data = stream_data_path(s.descriptor);
    files[data] = format_aligned(s);
    files[data.substr(0, data.size() - 4) + ".json"] = dump_json(sidecar_json(bundle, s));
  }

  for (const auto& [rel, bytes] : bundle.sourcedata) {
    if (rel.empty() || rel.front() == '/' || rel.find("..") != std::string::npos) {
      throw Error(ErrorKind::structural, "sourcedata path is not relative: " + rel);
    }
    files[std::string(kSourcedata) + rel] = bytes;
  }
  const auto anchors_rel = std::string(kSourcedata) + std::string(kAnchors);
  if (!bundle.anchors.empty() && !files.contains(anchors_rel)) {
    files[anchors_rel] = format_anchors(bundle.anchors);
  }
  const auto faults_rel = std::string(kSourcedata) + std::string(kFaultLog);
  if (bundle.fault_log && !files.contains(faults_rel)) {
    files[faults_rel] = dump_json(to_json(*bundle.fault_log));
  }

  if (!bundle.models.empty()) files[std::string(kClockModels)] = dump_json(clock_models_json(bundle));
  if (bundle.timing) files[std::string(kTimingReport)] = dump_json(to_json(*bundle.timing));
  if (bundle.qc) files[std::string(kQcReport)] = dump_json(*bundle.qc);
  if (!bundle.streams.empty()) files[std::string(kMapping)] = render_participant_mapping(bundle);
  if (bundle.scenario) {
    for (auto& [rel, bytes] : render_slices(bundle, slice_runs(bundle))) files[rel] = std::move(bytes);
  }

  commit_files(root, files, false);
  auto manifest = build_manifest(root, bundle);
  write_file(root / kManifest, dump_json(to_json(manifest)));
  return manifest;
}

SessionManifest refresh_manifest(const fs::path& root, const SessionBundle& bundle) {
  if (!fs::exists(root / kManifest)) {
    throw Error(ErrorKind::not_a_session, root.string() + " has no manifest.json");
  }
  auto manifest = build_manifest(root, bundle);
  write_file(root / kManifest, dump_json(to_json(manifest)));
  return manifest;
}

VerifyResult verify_session(const fs::path& root) {
  const auto manifest_file = root / kManifest;
  if (!fs::exists(manifest_file)) {
    throw Error(ErrorKind::not_a_session, root.string() + " has no manifest.json");
  }
  const auto manifest = manifest_from_json(parse_json_text(read_file(manifest_file), "manifest.json"));
  VerifyResult result;
  std::set<std::string> listed;
  for (const auto& e : manifest.entries) {
    listed.insert(e.relative_path);
    const auto path = root / e.relative_path;
    if (!fs::exists(path)) {
      result.missing.push_back(e.relative_path);
      continue;
    }
    const auto bytes = read_file(path);
    if (bytes.size() != e.byte_size || sha256_hex(bytes) != e.sha256_hex) {
      result.mismatched.push_back(e.relative_path);
    }
  }
  for (const auto& rel : scan_files(root)) {
    if (rel != kManifest && !listed.contains(rel)) result.unlisted.push_back(rel);
  }
  return result;
}

SessionBundle read_session(const fs::path& root) {
  const auto manifest_file = root / kManifest;
  if (!fs::exists(manifest_file)) {
    throw Error(ErrorKind::not_a_session, root.string() + " has no manifest.json");
  }
  const auto manifest = manifest_from_json(parse_json_text(read_file(manifest_file), "manifest.json"));

  SessionBundle b;
  std::map<std::string, std::string> contents;
  for (const auto& e : manifest.entries) {
    const auto path = root / e.relative_path;
    if (!fs::exists(path)) {
      b.integrity_issues.push_back(e.relative_path);
      continue;
    }
    auto bytes = read_file(path);
    if (bytes.size() != e.byte_size || sha256_hex(bytes) != e.sha256_hex) {
      b.integrity_issues.push_back(e.relative_path);
    }
    contents.emplace(e.relative_path, std::move(bytes));
  }
  auto get = [&](std::string_view rel) -> const std::string* {
    auto it = contents.find(std::string(rel));
    return it == contents.end() ? nullptr : &it->second;
  };

  const auto events_rel = find_events_file(manifest);
  if (!events_rel || !get(*events_rel)) {
    throw Error(ErrorKind::not_a_session, root.string() + " has no session events.tsv");
  }
  b.session_id = events_rel->substr(4, events_rel->size() - 4 - std::string_view("_events.tsv").size());
  b.events = parse_events(*get(*events_rel), (root / *events_rel).string());

  if (const auto* text = get(session_json_path(b.session_id))) {
    const auto doc = parse_json_text(*text, session_json_path(b.session_id));
    b.expected_streams = doc.value("expected_streams", std::vector<std::string>{});
    if (doc.contains("scenario") && !doc["scenario"].is_null()) {
      b.scenario = scenario_from_json(doc["scenario"]);
    }
  }

  for (const auto& [rel, bytes] : contents) {
    if (starts_with(rel, kSourcedata)) {
      b.sourcedata.emplace(rel.substr(kSourcedata.size()), bytes);
      continue;
    }
    const bool stream_area = starts_with(rel, "sub-") || starts_with(rel, "room/");
    if (!stream_area || !ends_with(rel, ".json")) continue;
    const auto doc = parse_json_text(bytes, rel);
    BundleStream s;
    s.descriptor = descriptor_from_json(doc.at("descriptor"));
    const auto data_rel = rel.substr(0, rel.size() - 5) + ".tsv";
    const auto* data = get(data_rel);
    if (!data) throw Error(ErrorKind::structural, "sidecar " + rel + " has no data file");
    s.samples = parse_aligned(*data, s.descriptor, (root / data_rel).string());
    const auto id = s.descriptor.stream_id;
    b.streams.emplace(id, std::move(s));
  }

  if (const auto* text = get(kClockModels)) {
    const auto doc = parse_json_text(*text, kClockModels);
    for (const auto& d : doc.at("devices")) {
      auto m = clock_model_from_json(d.at("model"));
      std::vector<SourceTier> demoted;
      for (const auto& t : d.value("demoted_from", nlohmann::json::array())) {
        const auto tier = parse_tier(t.get<std::string>());
        if (!tier) throw Error(ErrorKind::parse, std::string(kClockModels) + ": bad tier");
        demoted.push_back(*tier);
      }
      if (!demoted.empty()) b.demotions[m.device_id] = std::move(demoted);
      const auto id = m.device_id;
      b.models.emplace(id, std::move(m));
    }
  }
  if (const auto* text = get(kTimingReport)) {
    b.timing = timing_report_from_json(parse_json_text(*text, kTimingReport));
  }
  if (const auto* text = get(kQcReport)) b.qc = parse_json_text(*text, kQcReport);

  // anchors.tsv and fault_log.json are carried as typed fields; the raw copy is
  // kept only if it is not what those fields would render to.
  if (auto it = b.sourcedata.find(std::string(kAnchors)); it != b.sourcedata.end()) {
    b.anchors = parse_anchors(it->second, (root / kSourcedata / kAnchors).string());
    if (!b.anchors.empty() && format_anchors(b.anchors) == it->second) b.sourcedata.erase(it);
  }
  if (auto it = b.sourcedata.find(std::string(kFaultLog)); it != b.sourcedata.end()) {
    b.fault_log = fault_log_from_json(parse_json_text(it->second, kFaultLog));
    if (dump_json(to_json(*b.fault_log)) == it->second) b.sourcedata.erase(it);
  }
  return b;
}

}  // namespace meetsync
