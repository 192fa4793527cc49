#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "meetsync/scenario.hpp"
#include "meetsync/simdev.hpp"
#include "meetsync/timeline.hpp"

namespace meetsync {

inline constexpr std::string_view kToolName = "meetsync";
std::string_view tool_version() noexcept;
std::string created_with();

/// A stream on the authoritative timeline. Streams of unaligned devices keep
/// their descriptor but carry no samples.
struct BundleStream {
  StreamDescriptor descriptor;
  SampleSeries samples;
  friend bool operator==(const BundleStream&, const BundleStream&) = default;
};

struct SessionBundle {
  std::string session_id = "001";
  std::optional<Scenario> scenario;
  std::vector<EventRecord> events;
  std::map<std::string, BundleStream> streams;
  std::vector<TimeAnchor> anchors;
  std::map<std::string, ClockModel> models;  // by device_id
  /// Tiers rejected during alignment repair, by device_id.
  std::map<std::string, std::vector<SourceTier>> demotions;
  std::optional<TimingReport> timing;
  std::optional<FaultLog> fault_log;
  std::optional<nlohmann::json> qc;
  std::vector<std::string> expected_streams;
  /// Raw files, keyed by path relative to sourcedata/. Never rewritten.
  std::map<std::string, std::string> sourcedata;

  /// Filled by read_session: manifest entries whose bytes no longer match.
  /// Not part of the bundle's content.
  std::vector<std::string> integrity_issues;

  bool stream_aligned(const std::string& stream_id) const;
};

/// Field-by-field content equality (ignores integrity_issues).
bool same_content(const SessionBundle& a, const SessionBundle& b);

/// Rounds every number that is written to TSV to its six-decimal form, so a
/// canonical bundle survives write -> read unchanged.
void canonicalize(SessionBundle& bundle);

enum class Completeness { present, missing, partial };
std::string_view to_string(Completeness c) noexcept;

struct ManifestEntry {
  std::string relative_path;
  std::uintmax_t byte_size = 0;
  std::string sha256_hex;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct SessionManifest {
  std::vector<ManifestEntry> entries;  // sorted by relative_path
  std::map<std::string, Completeness> stream_completeness;
  std::string created_with;
  friend bool operator==(const SessionManifest&, const SessionManifest&) = default;
};

nlohmann::json to_json(const SessionManifest& manifest);
SessionManifest manifest_from_json(const nlohmann::json& doc);

/// Writes the session tree. The root must be absent or empty, except that
/// files already present under sourcedata/ or derivatives/ (left by earlier
/// pipeline stages) are accepted when they are byte-identical to what would
/// be written, or not written at all. Anything else is refused with
/// Error{io}; nothing is overwritten.
SessionManifest write_session(const std::filesystem::path& root, const SessionBundle& bundle);

/// Parses every canonical file. Hash mismatches against the manifest are
/// collected in integrity_issues. Throws Error{not_a_session} without a
/// manifest and Error{parse} (with file and line) on malformed content.
SessionBundle read_session(const std::filesystem::path& root);

struct VerifyResult {
  std::vector<std::string> mismatched;  // hash or size differs
  std::vector<std::string> missing;     // listed but absent
  std::vector<std::string> unlisted;    // present but not in the manifest
  bool ok() const noexcept { return mismatched.empty() && missing.empty(); }
};

VerifyResult verify_session(const std::filesystem::path& root);

/// Rescans the tree and rewrites manifest.json (used after a stage adds files).
SessionManifest refresh_manifest(const std::filesystem::path& root, const SessionBundle& bundle);

struct SampleRange {
  std::size_t begin = 0;  // half-open
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const SampleRange&, const SampleRange&) = default;
};

struct RunSlice {
  std::string task_id;
  double start_auth_s = 0.0;
  double end_auth_s = 0.0;
  std::map<std::string, SampleRange> ranges;  // by stream_id
};

/// One slice per task, windowed by the task's block_start..block_end. Sample
/// membership is half-open and evaluated at the canonical microsecond
/// resolution. Throws Error{structural} naming a task without both boundaries.
std::vector<RunSlice> slice_runs(const SessionBundle& bundle);

/// Slice files keyed by path relative to the session root.
std::map<std::string, std::string> render_slices(const SessionBundle& bundle,
                                                 const std::vector<RunSlice>& slices);

/// Writes (or confirms) slice files under derivatives/slices/ and refreshes the manifest.
std::vector<RunSlice> write_slices(const std::filesystem::path& root, const SessionBundle& bundle);

/// TSV `participant, stream_id, device_id, modality`; throws Error{structural}
/// for a stream without a participant label.
std::string render_participant_mapping(const SessionBundle& bundle);
std::filesystem::path write_participant_mapping(const std::filesystem::path& root,
                                                const SessionBundle& bundle);

std::string format_events(const std::vector<EventRecord>& events);
std::vector<EventRecord> parse_events(std::string_view text, std::string_view source_name);

std::string format_aligned(const BundleStream& stream);
SampleSeries parse_aligned(std::string_view text, const StreamDescriptor& desc,
                           std::string_view source_name);

/// Relative path of a stream's canonical data file (.tsv); the sidecar shares the stem.
std::string stream_data_path(const StreamDescriptor& desc);

/// derivatives/clock_models.json content: every model with its demotions.
std::string render_clock_models(const SessionBundle& bundle);

/// Deterministic JSON text: sorted keys, two-space indent, trailing newline.
std::string dump_json(const nlohmann::json& doc);

}  // namespace meetsync
