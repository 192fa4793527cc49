#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace meetsync {

enum class TaskId { T0, T1, T2, T3, T4 };

std::string_view to_string(TaskId task) noexcept;
std::optional<TaskId> parse_task(std::string_view text) noexcept;

/// A phase is either timed (duration_s set) or moderator-controlled (UNTIMED),
/// in which case the simulation takes its length from configuration.
struct Phase {
  std::string name;
  std::optional<double> duration_s;
  bool prompt_eligible = false;
  std::vector<std::string> trigger_events;

  bool timed() const noexcept { return duration_s.has_value(); }
  friend bool operator==(const Phase&, const Phase&) = default;
};

struct Block {
  TaskId task_id = TaskId::T0;
  std::vector<Phase> phases;
  friend bool operator==(const Block&, const Block&) = default;
};

struct Scenario {
  std::vector<Block> blocks;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// The five-block, four-participant meeting protocol.
Scenario default_scenario();

/// Throws Error{configuration} on duplicate task ids, empty blocks or
/// non-positive timed durations.
void validate(const Scenario& scenario);

nlohmann::json to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& doc);

/// One row of the session event spine. Absent values are written as `n/a`.
struct EventRecord {
  double onset_s = 0.0;
  std::optional<double> duration_s;
  std::optional<std::string> task;
  std::optional<std::string> phase;
  std::optional<std::string> participant;
  std::optional<std::string> stream;
  std::string event_type;
  std::optional<std::string> value;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

/// Spine order: onset, then (task, phase, event_type, participant) with
/// absent values sorting before present ones.
bool spine_less(const EventRecord& a, const EventRecord& b);
void sort_spine(std::vector<EventRecord>& events);

/// Untimed phase lengths keyed by "T2.settlement_form" or bare "settlement_form"
/// (the qualified key wins).
using UntimedDurations = std::map<std::string, double>;

/// Runs the phase state machine and returns the sorted spine: session_start,
/// block_start/block_end per block, phase_start per phase, session_end.
/// Throws Error{configuration} naming any untimed phase without a duration.
std::vector<EventRecord> run_scenario(const Scenario& scenario, const UntimedDurations& untimed,
                                      double gap_between_blocks_s = 0.0);

inline constexpr std::string_view kPromptEventType = "prompt_vad";
inline constexpr std::string_view kPromptValue = "valence,arousal,dominance:1-9";

struct PromptPolicy {
  double initial_delay_s = 60.0;
  std::optional<double> periodic_s = 120.0;
  double min_spacing_s = 90.0;
  double end_guard_s = 15.0;
  double trigger_latency_s = 2.0;
};

void validate(const PromptPolicy& policy);

/// Schedules valence-arousal-dominance prompts for P1..P4 inside
/// prompt-eligible phases. Candidates come from the periodic schedule and
/// from trigger events; a candidate closer than min_spacing_s to the
/// participant's previously accepted prompt is dropped. Returns only the
/// prompt records, sorted.
std::vector<EventRecord> schedule_prompts(const std::vector<EventRecord>& events,
                                          const Scenario& scenario, const PromptPolicy& policy);

/// Phase window recovered from a phase_start record.
struct PhaseWindow {
  std::string task;
  std::string phase;
  double start_s = 0.0;
  double end_s = 0.0;
};

std::vector<PhaseWindow> phase_windows(const std::vector<EventRecord>& events);

}  // namespace meetsync
