#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiermem/gateway.hpp"
#include "tiermem/lifecycle.hpp"
#include "tiermem/memory_state.hpp"
#include "tiermem/parsing.hpp"

namespace tiermem {

enum class ScheduleMode { fixed, agentic };

std::string_view to_string(ScheduleMode mode) noexcept;

struct SchedulerConfig {
  ScheduleMode mode = ScheduleMode::agentic;
  std::size_t check_interval = 3;
  std::size_t max_actions_per_round = 3;
  std::size_t extraction_window = 50;  // retrospective builds only

  void validate() const;
};

struct EngineConfig {
  std::size_t event_window = kDefaultEventWindow;
  LifecycleConfig lifecycle;
  SchedulerConfig scheduler;
  DomainConfig domain;

  void validate() const;
};

enum class ActionStatus { applied, guard_rejected, error };

std::string_view to_string(ActionStatus status) noexcept;

struct ActionOutcome {
  std::string tool;
  ActionStatus status = ActionStatus::applied;
  std::string detail;
};

struct PlannerRoundRecord {
  std::int64_t round_index = 0;
  std::vector<PlannerAction> actions_requested;
  std::int64_t actions_applied = 0;
  std::vector<ActionOutcome> outcomes;
  std::int64_t pending_count_at_invocation = 0;
  std::int64_t mutations = 0;
  bool synthesized = false;
  std::vector<std::string> warnings;

  nlohmann::ordered_json to_json() const;
};

// Per-tool application counts (extract, merge, boost, demote, forget, synthesize).
struct ToolCounts {
  std::map<std::string, std::int64_t> counts{{"extract", 0}, {"merge", 0},  {"boost", 0},
                                             {"demote", 0},  {"forget", 0}, {"synthesize", 0}};

  void add(std::string_view tool, std::int64_t n = 1) { counts[std::string(tool)] += n; }
  std::int64_t total() const;
  ToolCounts& operator+=(const ToolCounts& other);
  bool operator==(const ToolCounts&) const = default;
};

// Carried across rounds for one user: the previous round's outcome and tallies.
struct SchedulerContext {
  std::optional<PlannerRoundRecord> h_prev;
  std::int64_t rounds = 0;
  ToolCounts tools;
  std::vector<PlannerRoundRecord> log;
  std::vector<std::string> warnings;
};

// Memory-health summary given to the planner.
std::string memory_health(const MemoryState& state,
                          const std::optional<PlannerRoundRecord>& h_prev);

// Appends one signal and runs a round once B signals are pending.
std::optional<PlannerRoundRecord> ingest(MemoryState& state, EventSignal event,
                                         const EngineConfig& cfg, Session& session,
                                         SchedulerContext& ctx);

// One agentic round over the current pending set.
PlannerRoundRecord plan_round(MemoryState& state, const EngineConfig& cfg, Session& session,
                              SchedulerContext& ctx);

// One extraction call over the recent history plus one synthesis call.
MemoryState build_retrospective(std::span<const EventSignal> history, const EngineConfig& cfg,
                                Session& session, ToolCounts* tools = nullptr,
                                std::vector<std::string>* warnings = nullptr);

// One JSON object per line.
void append_round_log(const std::filesystem::path& path, const std::string& user_id,
                      const PlannerRoundRecord& record);

}  // namespace tiermem
