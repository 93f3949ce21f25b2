#include "tiermem/replay.hpp"

#include <fstream>
#include <set>

#include "tiermem/config.hpp"
#include "tiermem/error.hpp"

namespace tiermem {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

EventSignal parse_event(const json& e, const std::string& user_id, std::size_t index) {
  const auto where = "events[" + std::to_string(index) + "]";
  if (!e.is_object()) throw Error(ErrorKind::schema, where + ": expected an object");
  EventSignal ev;
  ev.user_id = user_id;
  try {
    ev.item_id = e.at("item_id").get<std::string>();
    if (e.contains("action")) ev.action = e["action"].get<std::string>();
    if (e.contains("timestamp")) ev.timestamp = e["timestamp"].get<std::int64_t>();
    if (e.contains("metadata")) {
      for (const auto& [k, v] : e["metadata"].items()) {
        ev.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::schema, where + ": " + ex.what());
  }
  return ev;
}

std::string chunk_label(const ordered_json& chunk) {
  std::string id = chunk.value("chunk_id", "?");
  std::string statement = chunk.value("statement", "");
  return id + " '" + statement + "'";
}

void diff_values(const std::string& path, const ordered_json& expected,
                 const ordered_json& actual, std::vector<std::string>& out) {
  if (expected == actual) return;
  if (expected.is_object() && actual.is_object()) {
    std::set<std::string> keys;
    for (const auto& [k, v] : expected.items()) keys.insert(k);
    for (const auto& [k, v] : actual.items()) keys.insert(k);
    for (const auto& k : keys) {
      const auto sub = path.empty() ? k : path + "." + k;
      if (!expected.contains(k)) {
        out.push_back(sub + ": unexpected field");
      } else if (!actual.contains(k)) {
        out.push_back(sub + ": missing field");
      } else {
        diff_values(sub, expected[k], actual[k], out);
      }
    }
    return;
  }
  if (expected.is_array() && actual.is_array()) {
    const auto n = std::max(expected.size(), actual.size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto sub = path + "[" + std::to_string(i) + "]";
      if (i >= actual.size()) {
        out.push_back(sub + ": missing, expected " + expected[i].dump());
      } else if (i >= expected.size()) {
        out.push_back(sub + ": unexpected " + actual[i].dump());
      } else {
        diff_values(sub, expected[i], actual[i], out);
      }
    }
    return;
  }
  out.push_back(path + ": expected " + expected.dump() + ", got " + actual.dump());
}

}  // namespace

ReplayFixture parse_replay_fixture(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::schema, "replay fixture must be a JSON object");
  ReplayFixture fx;
  fx.user_id = doc.value("user_id", "replay-user");
  if (fx.user_id.empty()) throw Error(ErrorKind::schema, "user_id must not be empty");

  if (doc.contains("config")) {
    RunConfig rc;
    apply_config(rc, doc["config"]);
    fx.engine = rc.eval.engine;
    fx.engine.scheduler.mode =
        rc.mode == RunMode::evolving_fixed ? ScheduleMode::fixed : ScheduleMode::agentic;
    if (rc.mode == RunMode::retrospective) {
      throw Error(ErrorKind::config, "mode: replay fixtures run an evolving schedule");
    }
  }
  fx.engine.validate();

  if (doc.contains("events")) {
    if (!doc["events"].is_array()) throw Error(ErrorKind::schema, "events must be an array");
    std::size_t i = 0;
    for (const auto& e : doc["events"]) fx.events.push_back(parse_event(e, fx.user_id, i++));
  }
  if (doc.contains("script")) fx.script = doc["script"];

  if (doc.contains("expected")) {
    const auto& exp = doc["expected"];
    if (exp.contains("state")) fx.expected_state = ordered_json::parse(exp["state"].dump());
    if (exp.contains("tool_counts")) {
      ToolCounts tc;
      for (const auto& [k, v] : exp["tool_counts"].items()) {
        if (!v.is_number_integer()) {
          throw Error(ErrorKind::schema, "expected.tool_counts." + k + " must be an integer");
        }
        tc.counts[k] = v.get<std::int64_t>();
      }
      fx.expected_tools = std::move(tc);
    }
  }
  return fx;
}

ReplayFixture load_replay_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open replay fixture " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, "replay fixture " + path.string() + ": " + e.what());
  }
  return parse_replay_fixture(doc);
}

const StrengthTrace* ReplayResult::trace_for(std::string_view statement) const {
  for (const auto& t : traces) {
    if (t.statement == statement) return &t;
  }
  return nullptr;
}

ReplayResult run_replay(const ReplayFixture& fx) {
  auto backend = ScriptedBackend::from_json(fx.script);
  Gateway gateway(backend);
  Session session(gateway, fx.user_id);

  ReplayResult result;
  result.state.user_id = fx.user_id;
  std::map<std::string, std::size_t> trace_index;

  auto sample = [&] {
    std::set<std::string> live;
    for (const auto& c : result.state.preferences) {
      live.insert(c.chunk_id);
      auto [it, fresh] = trace_index.try_emplace(c.chunk_id, result.traces.size());
      if (fresh) result.traces.push_back({c.chunk_id, c.category, c.statement, {}, std::nullopt});
      auto& t = result.traces[it->second];
      t.statement = c.statement;
      if (t.strengths.empty() || t.strengths.back() != c.strength) t.strengths.push_back(c.strength);
    }
    for (auto& t : result.traces) {
      if (!t.removed_at_step && !live.count(t.chunk_id)) t.removed_at_step = result.state.step;
    }
  };

  for (const auto& ev : fx.events) {
    ingest(result.state, ev, fx.engine, session, result.context);
    sample();
  }
  result.state_text = to_json_text(result.state);
  result.usage = session.usage();

  if (fx.expected_state) {
    auto diffs = diff_states(*fx.expected_state, ordered_json::parse(result.state_text));
    result.diffs.insert(result.diffs.end(), diffs.begin(), diffs.end());
  }
  if (fx.expected_tools) {
    auto diffs = diff_tool_counts(*fx.expected_tools, result.context.tools);
    result.diffs.insert(result.diffs.end(), diffs.begin(), diffs.end());
  }
  return result;
}

std::vector<std::string> diff_states(const ordered_json& expected, const ordered_json& actual) {
  std::vector<std::string> out;
  std::set<std::string> keys;
  for (const auto& [k, v] : expected.items()) keys.insert(k);
  for (const auto& [k, v] : actual.items()) keys.insert(k);

  for (const auto& k : keys) {
    if (!expected.contains(k)) {
      out.push_back(k + ": unexpected field");
      continue;
    }
    if (!actual.contains(k)) {
      out.push_back(k + ": missing field");
      continue;
    }
    if (k != "preferences" || !expected[k].is_array() || !actual[k].is_array()) {
      diff_values(k, expected[k], actual[k], out);
      continue;
    }
    // Chunks by id, so one divergent chunk yields one named entry.
    const auto before = out.size();
    std::map<std::string, const ordered_json*> exp_by_id;
    std::map<std::string, const ordered_json*> act_by_id;
    for (const auto& c : expected[k]) exp_by_id[c.value("chunk_id", "?")] = &c;
    for (const auto& c : actual[k]) act_by_id[c.value("chunk_id", "?")] = &c;
    for (const auto& [id, c] : exp_by_id) {
      auto it = act_by_id.find(id);
      if (it == act_by_id.end()) {
        out.push_back("preferences[" + chunk_label(*c) + "]: missing");
        continue;
      }
      diff_values("preferences[" + chunk_label(*c) + "]", *c, *it->second, out);
    }
    for (const auto& [id, c] : act_by_id) {
      if (!exp_by_id.count(id)) out.push_back("preferences[" + chunk_label(*c) + "]: unexpected");
    }
    if (out.size() == before) {
      std::vector<std::string> exp_order, act_order;
      for (const auto& c : expected[k]) exp_order.push_back(c.value("chunk_id", "?"));
      for (const auto& c : actual[k]) act_order.push_back(c.value("chunk_id", "?"));
      if (exp_order != act_order) out.push_back("preferences: chunk order differs");
    }
  }
  return out;
}

std::vector<std::string> diff_tool_counts(const ToolCounts& expected, const ToolCounts& actual) {
  std::vector<std::string> out;
  std::set<std::string> keys;
  for (const auto& [k, v] : expected.counts) keys.insert(k);
  for (const auto& [k, v] : actual.counts) keys.insert(k);
  for (const auto& k : keys) {
    auto e = expected.counts.count(k) ? expected.counts.at(k) : 0;
    auto a = actual.counts.count(k) ? actual.counts.at(k) : 0;
    if (e != a) {
      out.push_back("tool_counts." + k + ": expected " + std::to_string(e) + ", got " +
                    std::to_string(a));
    }
  }
  return out;
}

}  // namespace tiermem
