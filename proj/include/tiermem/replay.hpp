#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiermem/gateway.hpp"
#include "tiermem/memory_state.hpp"
#include "tiermem/scheduler.hpp"

namespace tiermem {

// A single-user event stream bundled with its scripted responses and the
// expected outcome.
//
// {
//   "user_id": "...",
//   "config":  { flat config keys, engine fields only },
//   "events":  [ {"item_id", "action", "timestamp", "metadata"} ... ],
//   "script":  { "defaults": {...}, "responses": [...] },
//   "expected": { "state": <persisted state>, "tool_counts": {...} }
// }
struct ReplayFixture {
  std::string user_id;
  EngineConfig engine;
  std::vector<EventSignal> events;
  nlohmann::json script = nlohmann::json::object();
  std::optional<nlohmann::ordered_json> expected_state;
  std::optional<ToolCounts> expected_tools;
};

ReplayFixture parse_replay_fixture(const nlohmann::json& doc);
ReplayFixture load_replay_fixture(const std::filesystem::path& path);

// Consecutive distinct strengths seen for one chunk, sampled after every event.
struct StrengthTrace {
  std::string chunk_id;
  std::string category;
  std::string statement;
  std::vector<double> strengths;
  std::optional<std::int64_t> removed_at_step;
};

struct ReplayResult {
  MemoryState state;
  std::string state_text;  // persisted form, byte-comparable
  SchedulerContext context;
  TokenUsage usage;
  std::vector<StrengthTrace> traces;  // in chunk creation order
  std::vector<std::string> diffs;     // empty when the expectation matches
  bool passed() const { return diffs.empty(); }

  const StrengthTrace* trace_for(std::string_view statement) const;
};

ReplayResult run_replay(const ReplayFixture& fixture);

// Field-level differences between two persisted states. Chunks are matched by
// id and reported with their statement.
std::vector<std::string> diff_states(const nlohmann::ordered_json& expected,
                                     const nlohmann::ordered_json& actual);
std::vector<std::string> diff_tool_counts(const ToolCounts& expected, const ToolCounts& actual);

}  // namespace tiermem
