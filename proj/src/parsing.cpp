#include "tiermem/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "tiermem/error.hpp"

namespace tiermem {

using json = nlohmann::json;

std::string_view to_string(UpdateAction action) noexcept {
  switch (action) {
    case UpdateAction::create: return "create";
    case UpdateAction::strengthen: return "strengthen";
    case UpdateAction::weaken: return "weaken";
  }
  return "unknown";
}

std::string_view to_string(PlannerTool tool) noexcept {
  switch (tool) {
    case PlannerTool::extract: return "extract";
    case PlannerTool::merge: return "merge";
    case PlannerTool::boost: return "boost";
    case PlannerTool::demote: return "demote";
    case PlannerTool::forget: return "forget";
  }
  return "unknown";
}

std::optional<PlannerTool> planner_tool_from_string(std::string_view name) {
  for (auto t : {PlannerTool::extract, PlannerTool::merge, PlannerTool::boost,
                 PlannerTool::demote, PlannerTool::forget}) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Decodes the span between the first `open` and the last `close`.
std::optional<json> outermost(std::string_view text, char open, char close) {
  const auto b = text.find(open);
  const auto e = text.rfind(close);
  if (b == std::string_view::npos || e == std::string_view::npos || e < b) return std::nullopt;
  try {
    return json::parse(text.substr(b, e - b + 1));
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

}  // namespace

ExtractionParse parse_extraction(std::string_view text) {
  auto doc = outermost(text, '[', ']');
  if (!doc || !doc->is_array()) {
    throw Error(ErrorKind::parse, "extraction response contains no JSON array");
  }

  ExtractionParse out;
  std::size_t index = 0;
  for (const auto& entry : *doc) {
    const auto where = "entry " + std::to_string(index++);
    if (!entry.is_object()) {
      out.warnings.push_back(where + ": not an object");
      continue;
    }
    const auto action_name =
        entry.contains("action") && entry["action"].is_string()
            ? lower(trim(entry["action"].get<std::string>()))
            : std::string("create");
    PreferenceUpdate u;
    if (action_name == "create") {
      u.action = UpdateAction::create;
    } else if (action_name == "strengthen") {
      u.action = UpdateAction::strengthen;
    } else if (action_name == "weaken") {
      u.action = UpdateAction::weaken;
    } else {
      out.warnings.push_back(where + ": invalid action '" + action_name + "'");
      continue;
    }
    if (entry.contains("category") && entry["category"].is_string()) {
      u.category = trim(entry["category"].get<std::string>());
    }
    if (entry.contains("text") && entry["text"].is_string()) {
      u.statement = trim(entry["text"].get<std::string>());
    } else if (entry.contains("statement") && entry["statement"].is_string()) {
      u.statement = trim(entry["statement"].get<std::string>());
    }
    for (const char* key : {"chunk_id", "id"}) {
      if (entry.contains(key) && entry[key].is_string()) {
        u.target_chunk_id = entry[key].get<std::string>();
        break;
      }
    }

    const bool has_strength = entry.contains("strength") && entry["strength"].is_number();
    if (has_strength) {
      u.strength = entry["strength"].get<double>();
      if (!std::isfinite(u.strength) || u.strength < -1.0 || u.strength > 1.0) {
        out.warnings.push_back(where + ": strength out of [-1, 1]");
        continue;
      }
    }
    if (u.action == UpdateAction::create) {
      if (!has_strength || u.statement.empty() || u.category.empty()) {
        out.warnings.push_back(where + ": create needs category, text and strength");
        continue;
      }
    } else if (u.statement.empty() && !u.target_chunk_id) {
      out.warnings.push_back(where + ": " + action_name + " has no target");
      continue;
    }
    if (out.updates.size() == kMaxUpdatesPerExtraction) {
      out.warnings.push_back(where + ": beyond the per-response limit, dropped");
      continue;
    }
    out.updates.push_back(std::move(u));
  }
  return out;
}

PlanParse parse_plan(std::string_view text) {
  auto doc = outermost(text, '{', '}');
  if (!doc || !doc->is_object() || !doc->contains("actions") || !(*doc)["actions"].is_array()) {
    throw Error(ErrorKind::parse, "plan response contains no {\"actions\": [...]} object");
  }

  PlanParse out;
  for (const auto& item : (*doc)["actions"]) {
    std::string name;
    json params = json::object();
    if (item.is_string()) {
      name = item.get<std::string>();
    } else if (item.is_object()) {
      std::string tool_key;
      for (const char* key : {"tool", "action", "name", "op"}) {
        if (item.contains(key) && item[key].is_string()) {
          tool_key = key;
          name = item[key].get<std::string>();
          break;
        }
      }
      if (item.contains("params") && item["params"].is_object()) {
        params = item["params"];
      } else {
        for (const auto& [k, v] : item.items()) {
          if (k != tool_key) params[k] = v;
        }
      }
    }
    name = lower(trim(name));
    auto tool = planner_tool_from_string(name);
    if (!tool) {
      out.rejected_tools.push_back(name);
      out.warnings.push_back("unknown planner tool '" + name + "' dropped");
      continue;
    }
    out.actions.push_back(PlannerAction{*tool, std::move(params)});
  }
  return out;
}

RankingParse parse_ranking(std::string_view text, const std::vector<std::string>& expected_ids) {
  if (expected_ids.empty()) throw Error(ErrorKind::validation, "ranking needs expected ids");
  RankingParse out;
  for (const auto& id : expected_ids) out.scores[id] = ItemScore{};

  std::istringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t pos; fields.size() < 3 && (pos = line.find('|', start)) != std::string::npos;
         start = pos + 1) {
      fields.push_back(trim(std::string_view(line).substr(start, pos - start)));
    }  // the reason keeps any further pipes
    fields.push_back(trim(std::string_view(line).substr(start)));
    if (fields.size() < 2) continue;

    auto id = fields[0];
    // Tolerate list bullets and markdown emphasis around the id.
    id.erase(std::remove(id.begin(), id.end(), '*'), id.end());
    id.erase(std::remove(id.begin(), id.end(), '`'), id.end());
    id = trim(id);
    if (id.rfind("- ", 0) == 0) id = trim(id.substr(2));
    auto it = out.scores.find(id);
    if (it == out.scores.end()) continue;
    if (it->second.parsed) {
      out.warnings.push_back("duplicate score line for " + id + " ignored");
      continue;
    }

    const auto& score_text = fields[1];
    double score = 0.0;
    const auto* first = score_text.data();
    const auto* last = first + score_text.size();
    auto [ptr, ec] = std::from_chars(first, last, score);
    if (ec != std::errc{} || ptr == first || !std::isfinite(score)) {
      out.warnings.push_back("unparseable score for " + id + ": '" + score_text + "'");
      continue;
    }
    auto& s = it->second;
    s.score = std::clamp(score, 0.0, 10.0);
    if (fields.size() > 2 && !fields[2].empty()) {
      s.tier = fields[2];
      std::transform(s.tier.begin(), s.tier.end(), s.tier.begin(),
                     [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    } else {
      s.tier = s.score >= 8 ? "STRONG" : s.score >= 4 ? "MAYBE" : "WEAK";
    }
    s.reason = fields.size() > 3 ? fields[3] : "";
    s.parsed = true;
    ++out.parsed_lines;
  }
  if (out.parsed_lines == 0) {
    throw Error(ErrorKind::parse, "ranking response has no parseable ITEM_ID | SCORE lines");
  }
  for (const auto& id : expected_ids) {
    if (!out.scores[id].parsed) out.warnings.push_back("no score line for " + id + ", using 5.0");
  }
  return out;
}

std::vector<std::string> parse_string_list(std::string_view text) {
  auto doc = outermost(text, '[', ']');
  if (!doc || !doc->is_array()) throw Error(ErrorKind::parse, "response contains no JSON array");
  std::vector<std::string> out;
  for (const auto& v : *doc) {
    if (!v.is_string()) continue;
    auto s = trim(v.get<std::string>());
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace tiermem
