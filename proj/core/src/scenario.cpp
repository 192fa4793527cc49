#include "meetsync/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "meetsync/error.hpp"

namespace meetsync {

namespace {

constexpr std::array<std::string_view, 5> kTaskNames{"T0", "T1", "T2", "T3", "T4"};
constexpr std::array<std::string_view, 4> kParticipants{"P1", "P2", "P3", "P4"};
constexpr std::string_view kUntimed = "UNTIMED";

Phase timed(std::string name, double seconds, bool prompts = false,
            std::vector<std::string> triggers = {}) {
  return Phase{std::move(name), seconds, prompts, std::move(triggers)};
}

Phase untimed(std::string name) { return Phase{std::move(name), std::nullopt, false, {}}; }

// Absent optionals sort first.
int compare_opt(const std::optional<std::string>& a, const std::optional<std::string>& b) {
  if (!a && !b) return 0;
  if (!a) return -1;
  if (!b) return 1;
  return a->compare(*b);
}

}  // namespace

std::string_view to_string(TaskId task) noexcept {
  return kTaskNames[static_cast<std::size_t>(task)];
}

std::optional<TaskId> parse_task(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
    if (kTaskNames[i] == text) return static_cast<TaskId>(i);
  }
  return std::nullopt;
}

Scenario default_scenario() {
  Scenario s;
  s.blocks = {
      {TaskId::T0, {timed("free_talk", 300, true)}},
      {TaskId::T1,
       {timed("reading", 75), timed("discussion", 420, true), timed("selection", 60)}},
      {TaskId::T2, {timed("negotiation", 480, true), untimed("settlement_form")}},
      {TaskId::T3,
       {timed("generation", 180), timed("board_discussion", 420, true), timed("selection", 60)}},
      {TaskId::T4,
       {timed("contribution", 60), timed("reveal", 60, true, {"phase_start"}),
        timed("discussion", 180, true)}},
  };
  return s;
}

void validate(const Scenario& scenario) {
  if (scenario.blocks.empty()) {
    throw Error(ErrorKind::configuration, "scenario has no blocks");
  }
  std::set<TaskId> seen;
  for (const auto& block : scenario.blocks) {
    const auto task = std::string(to_string(block.task_id));
    if (!seen.insert(block.task_id).second) {
      throw Error(ErrorKind::configuration, "duplicate task id " + task);
    }
    if (block.phases.empty()) {
      throw Error(ErrorKind::configuration, "block " + task + " has no phases");
    }
    for (const auto& phase : block.phases) {
      if (phase.name.empty()) {
        throw Error(ErrorKind::configuration, "block " + task + " has an unnamed phase");
      }
      if (phase.duration_s && !(std::isfinite(*phase.duration_s) && *phase.duration_s > 0.0)) {
        throw Error(ErrorKind::configuration,
                    "phase " + task + "." + phase.name + " must have a positive duration");
      }
    }
  }
}

nlohmann::json to_json(const Scenario& scenario) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& block : scenario.blocks) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : block.phases) {
      nlohmann::json phase;
      phase["name"] = p.name;
      if (p.duration_s) {
        phase["duration_s"] = *p.duration_s;
      } else {
        phase["duration_s"] = kUntimed;
      }
      phase["prompt_eligible"] = p.prompt_eligible;
      phase["trigger_events"] = p.trigger_events;
      phases.push_back(std::move(phase));
    }
    blocks.push_back({{"task_id", to_string(block.task_id)}, {"phases", std::move(phases)}});
  }
  return {{"blocks", std::move(blocks)}};
}

Scenario scenario_from_json(const nlohmann::json& doc) {
  Scenario scenario;
  try {
    for (const auto& b : doc.at("blocks")) {
      Block block;
      const auto task_text = b.at("task_id").get<std::string>();
      const auto task = parse_task(task_text);
      if (!task) throw Error(ErrorKind::configuration, "unknown task_id '" + task_text + "'");
      block.task_id = *task;
      for (const auto& p : b.at("phases")) {
        Phase phase;
        phase.name = p.at("name").get<std::string>();
        const auto& d = p.at("duration_s");
        if (d.is_string()) {
          if (d.get<std::string>() != kUntimed) {
            throw Error(ErrorKind::configuration,
                        "phase '" + phase.name + "': duration_s must be a number or UNTIMED");
          }
        } else {
          phase.duration_s = d.get<double>();
        }
        phase.prompt_eligible = p.value("prompt_eligible", false);
        phase.trigger_events = p.value("trigger_events", std::vector<std::string>{});
        block.phases.push_back(std::move(phase));
      }
      scenario.blocks.push_back(std::move(block));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::configuration, std::string("malformed scenario: ") + e.what());
  }
  validate(scenario);
  return scenario;
}

bool spine_less(const EventRecord& a, const EventRecord& b) {
  if (a.onset_s != b.onset_s) return a.onset_s < b.onset_s;
  if (int c = compare_opt(a.task, b.task)) return c < 0;
  if (int c = compare_opt(a.phase, b.phase)) return c < 0;
  if (int c = a.event_type.compare(b.event_type)) return c < 0;
  return compare_opt(a.participant, b.participant) < 0;
}

void sort_spine(std::vector<EventRecord>& events) {
  std::stable_sort(events.begin(), events.end(), spine_less);
}

std::vector<EventRecord> run_scenario(const Scenario& scenario, const UntimedDurations& untimed,
                                      double gap_between_blocks_s) {
  validate(scenario);
  if (!(std::isfinite(gap_between_blocks_s) && gap_between_blocks_s >= 0.0)) {
    throw Error(ErrorKind::configuration, "gap_between_blocks_s must be >= 0");
  }

  auto phase_length = [&](const Block& block, const Phase& phase) {
    if (phase.duration_s) return *phase.duration_s;
    const auto qualified = std::string(to_string(block.task_id)) + "." + phase.name;
    auto it = untimed.find(qualified);
    if (it == untimed.end()) it = untimed.find(phase.name);
    if (it == untimed.end() || !(std::isfinite(it->second) && it->second > 0.0)) {
      throw Error(ErrorKind::configuration,
                  "untimed phase " + qualified + " needs a positive configured duration");
    }
    return it->second;
  };

  std::vector<EventRecord> events;
  double t = 0.0;
  for (std::size_t k = 0; k < scenario.blocks.size(); ++k) {
    const auto& block = scenario.blocks[k];
    const auto task = std::string(to_string(block.task_id));
    if (k > 0) t += gap_between_blocks_s;

    double span = 0.0;
    for (const auto& phase : block.phases) span += phase_length(block, phase);

    events.push_back({t, span, task, std::nullopt, std::nullopt, std::nullopt, "block_start",
                      std::nullopt});
    for (const auto& phase : block.phases) {
      const double d = phase_length(block, phase);
      events.push_back({t, d, task, phase.name, std::nullopt, std::nullopt, "phase_start",
                        phase.timed() ? "timed" : "untimed"});
      t += d;
    }
    events.push_back({t, std::nullopt, task, std::nullopt, std::nullopt, std::nullopt,
                      "block_end", std::nullopt});
  }
  events.push_back({0.0, t, std::nullopt, std::nullopt, std::nullopt, std::nullopt,
                    "session_start", std::nullopt});
  events.push_back({t, std::nullopt, std::nullopt, std::nullopt, std::nullopt, std::nullopt,
                    "session_end", std::nullopt});
  sort_spine(events);
  return events;
}

void validate(const PromptPolicy& policy) {
  if (!(policy.min_spacing_s > 0.0)) {
    throw Error(ErrorKind::configuration, "prompt min_spacing_s must be > 0");
  }
  if (!(policy.end_guard_s >= 0.0)) {
    throw Error(ErrorKind::configuration, "prompt end_guard_s must be >= 0");
  }
  if (!(policy.initial_delay_s >= 0.0) || !(policy.trigger_latency_s >= 0.0)) {
    throw Error(ErrorKind::configuration, "prompt delays must be >= 0");
  }
  if (policy.periodic_s && !(*policy.periodic_s > 0.0)) {
    throw Error(ErrorKind::configuration, "prompt periodic_s must be > 0 when set");
  }
}

std::vector<PhaseWindow> phase_windows(const std::vector<EventRecord>& events) {
  std::vector<PhaseWindow> out;
  for (const auto& e : events) {
    if (e.event_type != "phase_start" || !e.task || !e.phase || !e.duration_s) continue;
    out.push_back({*e.task, *e.phase, e.onset_s, e.onset_s + *e.duration_s});
  }
  return out;
}

std::vector<EventRecord> schedule_prompts(const std::vector<EventRecord>& events,
                                          const Scenario& scenario, const PromptPolicy& policy) {
  validate(policy);

  struct Candidate {
    double t;
    const PhaseWindow* window;
    std::optional<std::string> only_participant;
  };
  const auto windows = phase_windows(events);
  std::vector<Candidate> candidates;

  auto find_phase = [&](const PhaseWindow& w) -> const Phase* {
    for (const auto& block : scenario.blocks) {
      if (to_string(block.task_id) != w.task) continue;
      for (const auto& p : block.phases) {
        if (p.name == w.phase) return &p;
      }
    }
    return nullptr;
  };
  auto admissible = [&](const PhaseWindow& w, double t) {
    return t >= w.start_s && t < w.end_s && (w.end_s - t) >= policy.end_guard_s;
  };

  for (const auto& w : windows) {
    const Phase* phase = find_phase(w);
    if (phase == nullptr || !phase->prompt_eligible) continue;

    for (int k = 0;; ++k) {
      const double t = w.start_s + policy.initial_delay_s + k * policy.periodic_s.value_or(0.0);
      if (!admissible(w, t)) break;
      candidates.push_back({t, &w, std::nullopt});
      if (!policy.periodic_s) break;
    }

    for (const auto& e : events) {
      if (e.onset_s < w.start_s || e.onset_s >= w.end_s) continue;
      if (std::find(phase->trigger_events.begin(), phase->trigger_events.end(), e.event_type) ==
          phase->trigger_events.end()) {
        continue;
      }
      // A trigger bound to a phase only fires for the phase it belongs to.
      if (e.event_type == "phase_start" && (e.task != w.task || e.phase != w.phase)) continue;
      const double t = e.onset_s + policy.trigger_latency_s;
      if (!admissible(w, t)) continue;
      std::optional<std::string> who;
      if (e.participant && *e.participant != "group") who = e.participant;
      candidates.push_back({t, &w, who});
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.t < b.t; });

  std::vector<EventRecord> prompts;
  for (auto participant : kParticipants) {
    std::optional<double> last;
    for (const auto& c : candidates) {
      if (c.only_participant && *c.only_participant != participant) continue;
      if (last && c.t - *last < policy.min_spacing_s) continue;
      last = c.t;
      prompts.push_back({c.t, std::nullopt, c.window->task, c.window->phase,
                         std::string(participant), std::nullopt, std::string(kPromptEventType),
                         std::string(kPromptValue)});
    }
  }
  sort_spine(prompts);
  return prompts;
}

}  // namespace meetsync
