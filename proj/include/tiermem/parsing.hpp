#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tiermem {

inline constexpr std::size_t kMaxUpdatesPerExtraction = 5;

enum class UpdateAction { create, strengthen, weaken };

std::string_view to_string(UpdateAction action) noexcept;

// One element of an extraction response.
struct PreferenceUpdate {
  UpdateAction action = UpdateAction::create;
  std::string category;
  std::string statement;
  double strength = 0.0;                    // meaningful for create only
  std::optional<std::string> target_chunk_id;  // explicit target for strengthen/weaken

  bool operator==(const PreferenceUpdate&) const = default;
};

struct ExtractionParse {
  std::vector<PreferenceUpdate> updates;
  std::vector<std::string> warnings;
};

// Finds the outermost JSON array (prose and code fences around it are
// tolerated), drops invalid entries one by one and keeps at most five.
// Throws Error{parse} when no array can be decoded.
ExtractionParse parse_extraction(std::string_view text);

enum class PlannerTool { extract, merge, boost, demote, forget };

std::string_view to_string(PlannerTool tool) noexcept;
std::optional<PlannerTool> planner_tool_from_string(std::string_view name);

struct PlannerAction {
  PlannerTool tool = PlannerTool::extract;
  nlohmann::json params = nlohmann::json::object();

  bool operator==(const PlannerAction&) const = default;
};

struct PlanParse {
  std::vector<PlannerAction> actions;
  std::vector<std::string> rejected_tools;  // names outside the plannable vocabulary
  std::vector<std::string> warnings;
};

// Parses {"actions": [...]}. Throws Error{parse} when no such object exists.
PlanParse parse_plan(std::string_view text);

struct ItemScore {
  double score = 5.0;
  std::string tier = "MAYBE";
  std::string reason;
  bool parsed = false;
};

struct RankingParse {
  std::map<std::string, ItemScore> scores;  // one entry per expected id
  std::size_t parsed_lines = 0;
  std::vector<std::string> warnings;
};

// Parses "ITEM_ID | SCORE | TIER | reason" lines. Scores are clamped to
// [0, 10]; expected ids without a line get 5.0 / MAYBE. Throws Error{parse}
// when not a single expected id could be parsed.
RankingParse parse_ranking(std::string_view text, const std::vector<std::string>& expected_ids);

// Outermost JSON array of strings (used for generated category lists).
std::vector<std::string> parse_string_list(std::string_view text);

}  // namespace tiermem
