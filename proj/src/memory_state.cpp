#include "tiermem/memory_state.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tiermem/error.hpp"

namespace tiermem {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::schema: return "schema";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::transport: return "transport";
    case ErrorKind::empty_response: return "empty_response";
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
  }
  return "unknown";
}

const std::vector<std::string>& default_event_actions() {
  static const std::vector<std::string> actions = {"view", "click", "purchase",
                                                   "rate", "review", "read"};
  return actions;
}

std::vector<const EventSignal*> MemoryState::pending() const {
  std::vector<const EventSignal*> out;
  for (const auto& e : events) {
    if (!e.processed) out.push_back(&e);
  }
  return out;
}

std::size_t MemoryState::pending_count() const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [](const auto& e) { return !e.processed; }));
}

PreferenceChunk* MemoryState::find_chunk(std::string_view chunk_id) {
  auto it = std::find_if(preferences.begin(), preferences.end(),
                         [&](const auto& c) { return c.chunk_id == chunk_id; });
  return it == preferences.end() ? nullptr : &*it;
}

const PreferenceChunk* MemoryState::find_chunk(std::string_view chunk_id) const {
  return const_cast<MemoryState*>(this)->find_chunk(chunk_id);
}

std::string MemoryState::allocate_chunk_id() {
  return "c" + std::to_string(next_chunk_id++);
}

void validate_event(const EventSignal& event, std::span<const std::string> allowed_actions) {
  if (event.user_id.empty()) throw Error(ErrorKind::validation, "event has empty user_id");
  if (event.item_id.empty()) throw Error(ErrorKind::validation, "event has empty item_id");
  if (event.timestamp < 0) {
    throw Error(ErrorKind::validation,
                "event timestamp must be >= 0 (item " + event.item_id + ")");
  }
  if (!allowed_actions.empty() &&
      std::find(allowed_actions.begin(), allowed_actions.end(), event.action) ==
          allowed_actions.end()) {
    throw Error(ErrorKind::validation, "unknown event action '" + event.action + "'");
  }
}

AppendOutcome append_event(MemoryState& state, EventSignal event, std::size_t event_window) {
  validate_event(event, {});
  if (event_window == 0) throw Error(ErrorKind::validation, "event window must be >= 1");
  if (!state.user_id.empty() && event.user_id != state.user_id) {
    throw Error(ErrorKind::validation,
                "event for user " + event.user_id + " appended to state of " + state.user_id);
  }
  state.step += 1;
  if (event.event_id.empty()) event.event_id = "e" + std::to_string(state.step);
  event.processed = false;

  AppendOutcome outcome;
  outcome.event_id = event.event_id;
  state.events.push_back(std::move(event));
  if (state.events.size() > event_window) {
    outcome.evicted = std::move(state.events.front());
    state.events.erase(state.events.begin());
  }
  return outcome;
}

void mark_processed(MemoryState& state, std::span<const std::string> event_ids) {
  std::vector<EventSignal*> targets;
  targets.reserve(event_ids.size());
  for (const auto& id : event_ids) {
    auto it = std::find_if(state.events.begin(), state.events.end(),
                           [&](const auto& e) { return e.event_id == id; });
    if (it == state.events.end()) {
      throw Error(ErrorKind::not_found, "event '" + id + "' is not in event memory");
    }
    targets.push_back(&*it);
  }
  for (auto* e : targets) e->processed = true;
}

bool chunk_id_less(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

// ---- persistence ----

namespace {

ordered_json event_to_json(const EventSignal& e) {
  ordered_json j;
  j["event_id"] = e.event_id;
  j["user_id"] = e.user_id;
  j["item_id"] = e.item_id;
  j["action"] = e.action;
  j["metadata"] = ordered_json::object();
  for (const auto& [k, v] : e.metadata) j["metadata"][k] = v;
  j["timestamp"] = e.timestamp;
  j["processed"] = e.processed;
  return j;
}

ordered_json chunk_to_json(const PreferenceChunk& c) {
  ordered_json j;
  j["chunk_id"] = c.chunk_id;
  j["category"] = c.category;
  j["statement"] = c.statement;
  j["strength"] = c.strength;
  j["evidence"] = c.evidence;
  j["created_at"] = c.created_at;
  j["updated_at"] = c.updated_at;
  return j;
}

[[noreturn]] void schema_fail(const std::string& what) {
  throw Error(ErrorKind::schema, "state file schema error: " + what);
}

void require_exact_keys(const json& j, std::initializer_list<const char*> keys,
                        const std::string& where) {
  if (!j.is_object()) schema_fail(where + " must be an object");
  std::set<std::string> expected(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items()) {
    if (!expected.count(k)) schema_fail("unknown field '" + k + "' in " + where);
  }
  for (const auto& k : expected) {
    if (!j.contains(k)) schema_fail("missing field '" + k + "' in " + where);
  }
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    schema_fail("field '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

std::int64_t get_int(const json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) {
    schema_fail("field '" + std::string(key) + "' in " + where + " must be an integer");
  }
  return v.get<std::int64_t>();
}

}  // namespace

std::string to_json_text(const MemoryState& state) {
  ordered_json j;
  j["schema_version"] = kStateSchemaVersion;
  j["user_id"] = state.user_id;
  j["events"] = ordered_json::array();
  for (const auto& e : state.events) j["events"].push_back(event_to_json(e));
  j["preferences"] = ordered_json::array();
  for (const auto& c : state.preferences) j["preferences"].push_back(chunk_to_json(c));
  j["profile"] = {{"text", state.profile.text},
                  {"previous_text", state.profile.previous_text},
                  {"version", state.profile.version},
                  {"synthesized_at", state.profile.synthesized_at}};
  j["mutation_count"] = state.mutation_count;
  j["step"] = state.step;
  j["next_chunk_id"] = state.next_chunk_id;
  return j.dump(2) + "\n";
}

MemoryState from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    schema_fail(std::string("not valid JSON: ") + e.what());
  }
  require_exact_keys(j,
                     {"schema_version", "user_id", "events", "preferences", "profile",
                      "mutation_count", "step", "next_chunk_id"},
                     "state");
  const auto version = get_int(j, "schema_version", "state");
  if (version != kStateSchemaVersion) {
    schema_fail("unsupported schema_version " + std::to_string(version) + " (expected " +
                std::to_string(kStateSchemaVersion) + ")");
  }

  MemoryState s;
  s.user_id = get_field<std::string>(j, "user_id", "state");
  s.mutation_count = get_int(j, "mutation_count", "state");
  s.step = get_int(j, "step", "state");
  s.next_chunk_id = get_int(j, "next_chunk_id", "state");
  if (s.mutation_count < 0 || s.step < 0 || s.next_chunk_id < 1) {
    schema_fail("negative counter");
  }

  if (!j["events"].is_array()) schema_fail("events must be an array");
  for (const auto& ej : j["events"]) {
    require_exact_keys(ej,
                       {"event_id", "user_id", "item_id", "action", "metadata", "timestamp",
                        "processed"},
                       "event");
    EventSignal e;
    e.event_id = get_field<std::string>(ej, "event_id", "event");
    e.user_id = get_field<std::string>(ej, "user_id", "event");
    e.item_id = get_field<std::string>(ej, "item_id", "event");
    e.action = get_field<std::string>(ej, "action", "event");
    e.metadata = get_field<std::map<std::string, std::string>>(ej, "metadata", "event");
    e.timestamp = get_int(ej, "timestamp", "event");
    e.processed = get_field<bool>(ej, "processed", "event");
    try {
      validate_event(e, {});
    } catch (const Error& err) {
      schema_fail(err.what());
    }
    s.events.push_back(std::move(e));
  }

  if (!j["preferences"].is_array()) schema_fail("preferences must be an array");
  for (const auto& cj : j["preferences"]) {
    require_exact_keys(cj,
                       {"chunk_id", "category", "statement", "strength", "evidence",
                        "created_at", "updated_at"},
                       "preference");
    PreferenceChunk c;
    c.chunk_id = get_field<std::string>(cj, "chunk_id", "preference");
    c.category = get_field<std::string>(cj, "category", "preference");
    c.statement = get_field<std::string>(cj, "statement", "preference");
    c.strength = get_field<double>(cj, "strength", "preference");
    c.evidence = get_int(cj, "evidence", "preference");
    c.created_at = get_int(cj, "created_at", "preference");
    c.updated_at = get_int(cj, "updated_at", "preference");
    if (c.strength < -1.0 || c.strength > 1.0) schema_fail("strength out of [-1, 1]");
    if (c.evidence < 1) schema_fail("evidence must be >= 1");
    if (c.statement.empty() || c.chunk_id.empty()) schema_fail("empty chunk field");
    s.preferences.push_back(std::move(c));
  }

  const auto& pj = j["profile"];
  require_exact_keys(pj, {"text", "previous_text", "version", "synthesized_at"}, "profile");
  s.profile.text = get_field<std::string>(pj, "text", "profile");
  s.profile.previous_text = get_field<std::string>(pj, "previous_text", "profile");
  s.profile.version = get_int(pj, "version", "profile");
  s.profile.synthesized_at = get_int(pj, "synthesized_at", "profile");
  if (s.profile.version < 0) schema_fail("negative profile version");
  return s;
}

void save_state(const MemoryState& state, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    out << to_json_text(state);
    if (!out) throw Error(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::io, "cannot move state into " + path.string() + ": " + ec.message());
}

MemoryState load_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open state file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

}  // namespace tiermem
