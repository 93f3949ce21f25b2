#include "tiermem/scheduler.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include "tiermem/error.hpp"
#include "tiermem/prompts.hpp"

namespace tiermem {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(ScheduleMode mode) noexcept {
  return mode == ScheduleMode::fixed ? "fixed" : "agentic";
}

std::string_view to_string(ActionStatus status) noexcept {
  switch (status) {
    case ActionStatus::applied: return "applied";
    case ActionStatus::guard_rejected: return "guard_rejected";
    case ActionStatus::error: return "error";
  }
  return "unknown";
}

void SchedulerConfig::validate() const {
  if (check_interval < 1) throw Error(ErrorKind::config, "check_interval must be >= 1");
  if (max_actions_per_round < 1) {
    throw Error(ErrorKind::config, "max_actions_per_round must be >= 1");
  }
  if (extraction_window < 1) throw Error(ErrorKind::config, "extraction_window must be >= 1");
}

void EngineConfig::validate() const {
  if (event_window < 1) throw Error(ErrorKind::config, "event_window must be >= 1");
  lifecycle.validate();
  scheduler.validate();
  if (domain.categories.empty()) throw Error(ErrorKind::config, "categories must not be empty");
}

std::int64_t ToolCounts::total() const {
  std::int64_t n = 0;
  for (const auto& [_, v] : counts) n += v;
  return n;
}

ToolCounts& ToolCounts::operator+=(const ToolCounts& other) {
  for (const auto& [k, v] : other.counts) counts[k] += v;
  return *this;
}

ordered_json PlannerRoundRecord::to_json() const {
  ordered_json j;
  j["round_index"] = round_index;
  j["pending_count_at_invocation"] = pending_count_at_invocation;
  j["actions_requested"] = ordered_json::array();
  for (const auto& a : actions_requested) {
    j["actions_requested"].push_back(
        {{"tool", to_string(a.tool)}, {"params", ordered_json::parse(a.params.dump())}});
  }
  j["actions_applied"] = actions_applied;
  j["outcomes"] = ordered_json::array();
  for (const auto& o : outcomes) {
    j["outcomes"].push_back(
        {{"tool", o.tool}, {"status", to_string(o.status)}, {"detail", o.detail}});
  }
  j["mutations"] = mutations;
  j["synthesized"] = synthesized;
  j["warnings"] = warnings;
  return j;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Chunk references resolve by id first, then by exact (case-insensitive) statement.
std::optional<std::string> resolve_ref(const MemoryState& state, const json& ref) {
  if (!ref.is_string()) return std::nullopt;
  const auto value = ref.get<std::string>();
  if (state.find_chunk(value)) return value;
  const auto wanted = lower(value);
  for (const auto& c : state.preferences) {
    if (lower(c.statement) == wanted) return c.chunk_id;
  }
  return std::nullopt;
}

const json* first_param(const json& params, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (params.contains(k)) return &params[k];
  }
  return nullptr;
}

void mark_if_present(MemoryState& state, std::span<const EventSignal> events) {
  for (const auto& e : events) {
    for (auto& held : state.events) {
      if (held.event_id == e.event_id) held.processed = true;
    }
  }
}

ActionOutcome execute(const PlannerAction& action, MemoryState& state,
                      std::span<const EventSignal> pending, const EngineConfig& cfg,
                      Session& session, std::vector<std::string>& warnings) {
  ActionOutcome out{std::string(to_string(action.tool)), ActionStatus::applied, {}};
  const auto& params = action.params;
  auto fail = [&](std::string why) {
    out.status = ActionStatus::error;
    out.detail = std::move(why);
    return out;
  };

  try {
    switch (action.tool) {
      case PlannerTool::extract: {
        auto r = extract(state, pending, session, cfg.lifecycle, cfg.domain);
        warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
        out.detail = std::to_string(r.applied.size()) + " updates";
        if (!r.created_ids.empty()) {
          out.detail += " (created";
          for (const auto& id : r.created_ids) out.detail += " " + id;
          out.detail += ")";
        }
        if (r.parse_failed) out.detail += "; response unparseable";
        return out;
      }
      case PlannerTool::boost:
      case PlannerTool::demote:
      case PlannerTool::forget: {
        const auto* ref = first_param(
            params, {"chunk_id", "id", "target", "chunk", "statement", "text", "preference"});
        if (!ref) return fail("missing chunk reference");
        auto id = resolve_ref(state, *ref);
        if (!id) return fail("unresolvable chunk reference " + ref->dump());
        out.detail = *id;
        if (action.tool == PlannerTool::boost) {
          boost(state, *id, cfg.lifecycle);
        } else if (action.tool == PlannerTool::demote) {
          demote(state, *id, cfg.lifecycle);
        } else if (forget(state, *id, cfg.lifecycle) == ForgetOutcome::guard_rejected) {
          out.status = ActionStatus::guard_rejected;
        }
        return out;
      }
      case PlannerTool::merge: {
        const auto* refs =
            first_param(params, {"source_ids", "chunk_ids", "sources", "ids", "chunks"});
        if (!refs || !refs->is_array()) return fail("merge needs a list of source chunks");
        std::vector<std::string> ids;
        for (const auto& r : *refs) {
          auto id = resolve_ref(state, r);
          if (!id) return fail("unresolvable chunk reference " + r.dump());
          ids.push_back(*id);
        }
        std::string statement;
        if (const auto* s = first_param(params, {"merged_statement", "statement", "text"});
            s && s->is_string()) {
          statement = s->get<std::string>();
        }
        out.detail = merge(state, ids, statement, cfg.lifecycle);
        return out;
      }
    }
  } catch (const Error& e) {
    return fail(std::string(to_string(e.kind())) + ": " + e.what());
  }
  return fail("unhandled tool");
}

void auto_synthesize(MemoryState& state, const EngineConfig& cfg, Session& session,
                     SchedulerContext& ctx, PlannerRoundRecord& record) {
  if (state.mutation_count < cfg.lifecycle.synthesis_trigger) return;
  try {
    auto r = synthesize(state, session);
    record.warnings.insert(record.warnings.end(), r.warnings.begin(), r.warnings.end());
    if (r.updated) {
      record.synthesized = true;
      ctx.tools.add("synthesize");
    }
  } catch (const Error& e) {
    record.warnings.push_back(std::string("synthesis failed: ") + e.what());
  }
}

}  // namespace

std::string memory_health(const MemoryState& state,
                          const std::optional<PlannerRoundRecord>& h_prev) {
  std::string out = std::to_string(state.preferences.size()) + " chunks";
  std::map<std::string, int> per_category;
  for (const auto& c : state.preferences) per_category[c.category]++;
  if (!per_category.empty()) {
    out += " (";
    bool first = true;
    for (const auto& [cat, n] : per_category) {
      out += (first ? "" : ", ") + cat + ": " + std::to_string(n);
      first = false;
    }
    out += ")";
  }
  if (!state.preferences.empty()) {
    const auto weakest = std::min_element(
        state.preferences.begin(), state.preferences.end(), [](const auto& a, const auto& b) {
          const auto sa = std::abs(a.strength), sb = std::abs(b.strength);
          if (sa != sb) return sa < sb;
          return chunk_id_less(a.chunk_id, b.chunk_id);
        });
    out += "; weakest: [" + weakest->chunk_id + "] " + weakest->statement + " (strength " +
           fixed2(weakest->strength) + ", evidence " + std::to_string(weakest->evidence) + ")";
  }
  out += "; mutations since last synthesis: " + std::to_string(state.mutation_count);
  if (h_prev) {
    out += "; previous round: " + std::to_string(h_prev->actions_requested.size()) +
           " requested, " + std::to_string(h_prev->actions_applied) + " applied";
    if (!h_prev->outcomes.empty()) {
      out += " (";
      for (std::size_t i = 0; i < h_prev->outcomes.size(); ++i) {
        const auto& o = h_prev->outcomes[i];
        out += (i ? ", " : "") + o.tool + (o.detail.empty() ? "" : " " + o.detail) + ": " +
               std::string(to_string(o.status));
      }
      out += ")";
    }
  } else {
    out += "; previous round: none";
  }
  return out;
}

PlannerRoundRecord plan_round(MemoryState& state, const EngineConfig& cfg, Session& session,
                              SchedulerContext& ctx) {
  std::vector<EventSignal> pending;
  for (const auto* e : state.pending()) pending.push_back(*e);
  if (pending.empty()) throw Error(ErrorKind::validation, "plan_round needs pending events");

  PlannerRoundRecord record;
  record.round_index = ++ctx.rounds;
  record.pending_count_at_invocation = static_cast<std::int64_t>(pending.size());
  const auto mutations_before = state.mutation_count;

  std::string prefs, items;
  for (const auto& c : state.preferences) {
    prefs += (prefs.empty() ? "" : "\n") + format_preference_line(c);
  }
  for (const auto& e : pending) items += (items.empty() ? "" : "\n") + format_event_line(e);
  const auto request = render_prompt(
      PromptTag::plan,
      {{"full_profile", state.profile.text.empty() ? "(none yet)" : state.profile.text},
       {"pref_count", std::to_string(state.preferences.size())},
       {"preference_list", prefs.empty() ? "(none)" : prefs},
       {"pending_count", std::to_string(pending.size())},
       {"items_with_descriptions", items},
       {"health_section", memory_health(state, ctx.h_prev)}});

  std::optional<PlanParse> plan;
  try {
    plan = complete_parsed(session, request, parse_plan, &record.warnings);
    if (!plan) record.warnings.push_back("plan unparseable after retry; round skipped");
  } catch (const Error& e) {
    record.warnings.push_back(std::string("planner call failed, round skipped: ") + e.what());
  }

  if (plan) {
    record.warnings.insert(record.warnings.end(), plan->warnings.begin(), plan->warnings.end());
    for (const auto& name : plan->rejected_tools) {
      record.outcomes.push_back({name, ActionStatus::error, "unknown tool"});
    }
    auto& actions = plan->actions;
    if (actions.size() > cfg.scheduler.max_actions_per_round) {
      record.warnings.push_back(std::to_string(actions.size() - cfg.scheduler.max_actions_per_round) +
                                " planner actions beyond the per-round limit dropped");
      actions.resize(cfg.scheduler.max_actions_per_round);
    }
    record.actions_requested = actions;
    for (const auto& action : actions) {
      auto outcome = execute(action, state, pending, cfg, session, record.warnings);
      if (outcome.status == ActionStatus::applied) {
        ++record.actions_applied;
        ctx.tools.add(outcome.tool);
      }
      record.outcomes.push_back(std::move(outcome));
    }
  }

  mark_if_present(state, pending);
  enforce_capacity(state, cfg.lifecycle);
  record.mutations = state.mutation_count - mutations_before;
  auto_synthesize(state, cfg, session, ctx, record);

  ctx.h_prev = record;
  ctx.log.push_back(record);
  return record;
}

std::optional<PlannerRoundRecord> ingest(MemoryState& state, EventSignal event,
                                         const EngineConfig& cfg, Session& session,
                                         SchedulerContext& ctx) {
  if (state.user_id.empty()) state.user_id = event.user_id;
  auto appended = append_event(state, std::move(event), cfg.event_window);
  if (appended.evicted && !appended.evicted->processed) {
    ctx.warnings.push_back("pending event " + appended.evicted->event_id +
                           " evicted before extraction");
  }
  if (state.pending_count() < cfg.scheduler.check_interval) return std::nullopt;

  if (cfg.scheduler.mode == ScheduleMode::agentic) return plan_round(state, cfg, session, ctx);

  // Fixed schedule: extract then synthesize every B signals.
  std::vector<EventSignal> pending;
  for (const auto* e : state.pending()) pending.push_back(*e);
  PlannerRoundRecord record;
  record.round_index = ++ctx.rounds;
  record.pending_count_at_invocation = static_cast<std::int64_t>(pending.size());
  record.actions_requested.push_back(PlannerAction{PlannerTool::extract, json::object()});
  const auto mutations_before = state.mutation_count;
  try {
    auto r = extract(state, pending, session, cfg.lifecycle, cfg.domain);
    record.warnings = r.warnings;
    record.outcomes.push_back({"extract", ActionStatus::applied,
                               std::to_string(r.applied.size()) + " updates"});
    record.actions_applied = 1;
    ctx.tools.add("extract");
  } catch (const Error& e) {
    record.outcomes.push_back({"extract", ActionStatus::error, e.what()});
  }
  mark_if_present(state, pending);
  record.mutations = state.mutation_count - mutations_before;
  try {
    auto s = synthesize(state, session);
    record.warnings.insert(record.warnings.end(), s.warnings.begin(), s.warnings.end());
    if (s.updated) {
      record.synthesized = true;
      ctx.tools.add("synthesize");
    }
  } catch (const Error& e) {
    record.warnings.push_back(std::string("synthesis failed: ") + e.what());
  }
  ctx.h_prev = record;
  ctx.log.push_back(record);
  return record;
}

MemoryState build_retrospective(std::span<const EventSignal> history, const EngineConfig& cfg,
                                Session& session, ToolCounts* tools,
                                std::vector<std::string>* warnings) {
  if (history.empty()) throw Error(ErrorKind::validation, "retrospective build needs history");
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].timestamp < history[i - 1].timestamp) {
      throw Error(ErrorKind::validation, "history must be timestamp-ordered");
    }
  }

  MemoryState state;
  state.user_id = history.front().user_id;
  std::vector<EventSignal> stamped;
  stamped.reserve(history.size());
  for (const auto& e : history) {
    auto appended = append_event(state, e, cfg.event_window);
    stamped.push_back(e);
    stamped.back().event_id = appended.event_id;
  }

  const auto window = std::min(stamped.size(), cfg.scheduler.extraction_window);
  std::span<const EventSignal> recent(stamped.data() + stamped.size() - window, window);
  auto r = extract(state, recent, session, cfg.lifecycle, cfg.domain);
  if (warnings) warnings->insert(warnings->end(), r.warnings.begin(), r.warnings.end());
  for (auto& e : state.events) e.processed = true;

  auto s = synthesize(state, session);
  if (warnings) warnings->insert(warnings->end(), s.warnings.begin(), s.warnings.end());
  if (tools) {
    tools->add("extract");
    if (s.updated) tools->add("synthesize");
  }
  return state;
}

void append_round_log(const std::filesystem::path& path, const std::string& user_id,
                      const PlannerRoundRecord& record) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot append to round log " + path.string());
  ordered_json line;
  line["user_id"] = user_id;
  const auto body = record.to_json();  // items() must not outlive a temporary
  for (const auto& [k, v] : body.items()) line[k] = v;
  out << line.dump() << "\n";
}

}  // namespace tiermem
