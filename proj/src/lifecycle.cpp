#include "tiermem/lifecycle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "tiermem/error.hpp"
#include "tiermem/prompts.hpp"

namespace tiermem {

std::string_view to_string(ForgetGuard guard) noexcept {
  return guard == ForgetGuard::strict ? "strict" : "planner_trusted";
}

ForgetGuard forget_guard_from_string(std::string_view name) {
  if (name == "strict") return ForgetGuard::strict;
  if (name == "planner_trusted") return ForgetGuard::planner_trusted;
  throw Error(ErrorKind::config, "forget_guard must be 'strict' or 'planner_trusted', got '" +
                                     std::string(name) + "'");
}

void LifecycleConfig::validate() const {
  if (!(boost_step > 0)) throw Error(ErrorKind::config, "boost_step must be > 0");
  if (!(demote_step > boost_step)) {
    throw Error(ErrorKind::config,
                "demote_step must exceed boost_step (pessimistic update rule: demote_step > "
                "boost_step > 0)");
  }
  if (!(forget_strength_threshold > 0 && forget_strength_threshold < 1)) {
    throw Error(ErrorKind::config, "forget_strength_threshold must lie in (0, 1)");
  }
  if (forget_evidence_threshold < 1) {
    throw Error(ErrorKind::config, "forget_evidence_threshold must be >= 1");
  }
  if (synthesis_trigger < 1) throw Error(ErrorKind::config, "synthesis_trigger must be >= 1");
  if (capacity_per_category < 1) {
    throw Error(ErrorKind::config, "capacity_per_category must be >= 1");
  }
}

double normalize_strength(double strength) {
  const double c = std::clamp(strength, -1.0, 1.0);
  const double snapped = std::round(c * 1e6) / 1e6;
  return snapped == 0.0 ? 0.0 : snapped;  // no negative zero
}

std::int64_t capacity_score(const PreferenceChunk& chunk) {
  return chunk.evidence * std::llround(std::fabs(chunk.strength) * 1e6);
}

namespace {

PreferenceChunk& require_chunk(MemoryState& state, std::string_view chunk_id) {
  auto* c = state.find_chunk(chunk_id);
  if (!c) throw Error(ErrorKind::not_found, "no preference chunk '" + std::string(chunk_id) + "'");
  return *c;
}

void adjust(MemoryState& state, std::string_view chunk_id, double delta) {
  auto& c = require_chunk(state, chunk_id);
  c.strength = normalize_strength(c.strength + delta);
  c.evidence += 1;
  c.updated_at = state.step;
  state.mutation_count += 1;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

const PreferenceChunk* resolve_target(const MemoryState& state, const PreferenceUpdate& u) {
  if (u.target_chunk_id) {
    if (const auto* c = state.find_chunk(*u.target_chunk_id)) return c;
  }
  const auto wanted = lower(u.statement);
  for (const auto& c : state.preferences) {
    if (lower(c.statement) == wanted && (u.category.empty() || lower(c.category) == lower(u.category))) {
      return &c;
    }
  }
  for (const auto& c : state.preferences) {
    if (lower(c.statement) == wanted) return &c;
  }
  return nullptr;
}

}  // namespace

void boost(MemoryState& state, std::string_view chunk_id, const LifecycleConfig& cfg) {
  adjust(state, chunk_id, cfg.boost_step);
}

void demote(MemoryState& state, std::string_view chunk_id, const LifecycleConfig& cfg) {
  adjust(state, chunk_id, -cfg.demote_step);
}

std::string merge(MemoryState& state, std::span<const std::string> source_ids,
                  std::string_view merged_statement, const LifecycleConfig&) {
  std::set<std::string> distinct(source_ids.begin(), source_ids.end());
  if (distinct.size() < 2 || distinct.size() != source_ids.size()) {
    throw Error(ErrorKind::validation, "merge needs at least two distinct source chunks");
  }
  std::vector<const PreferenceChunk*> sources;
  for (const auto& id : source_ids) sources.push_back(&require_chunk(state, id));
  for (const auto* s : sources) {
    if (s->category != sources.front()->category) {
      throw Error(ErrorKind::validation, "merge sources span categories '" +
                                             sources.front()->category + "' and '" +
                                             s->category + "'");
    }
  }

  PreferenceChunk merged = *sources.front();
  std::int64_t evidence = 0;
  double weighted = 0.0;
  for (const auto* s : sources) {
    evidence += s->evidence;
    weighted += s->strength * static_cast<double>(s->evidence);
    merged.created_at = std::min(merged.created_at, s->created_at);
  }
  merged.evidence = evidence;
  merged.strength = normalize_strength(weighted / static_cast<double>(evidence));
  merged.updated_at = state.step;
  if (!merged_statement.empty()) {
    merged.statement = std::string(merged_statement);
  } else {
    const auto* longest = *std::max_element(
        sources.begin(), sources.end(),
        [](const auto* a, const auto* b) { return a->statement.size() < b->statement.size(); });
    merged.statement = longest->statement;
  }

  const std::string survivor = merged.chunk_id;
  std::vector<PreferenceChunk> kept;
  kept.reserve(state.preferences.size());
  for (auto& c : state.preferences) {
    if (c.chunk_id == survivor) {
      kept.push_back(merged);
    } else if (!distinct.count(c.chunk_id)) {
      kept.push_back(std::move(c));
    }
  }
  state.preferences = std::move(kept);
  state.mutation_count += 1;
  return survivor;
}

ForgetOutcome forget(MemoryState& state, std::string_view chunk_id, const LifecycleConfig& cfg) {
  const auto& c = require_chunk(state, chunk_id);
  if (cfg.forget_guard == ForgetGuard::strict) {
    const bool weak = std::fabs(c.strength) < cfg.forget_strength_threshold;
    const bool enough_evidence = c.evidence >= cfg.forget_evidence_threshold;
    if (!(weak && enough_evidence)) return ForgetOutcome::guard_rejected;
  }
  std::erase_if(state.preferences, [&](const auto& p) { return p.chunk_id == chunk_id; });
  state.mutation_count += 1;
  return ForgetOutcome::deleted;
}

std::vector<PreferenceChunk> enforce_capacity(MemoryState& state, const LifecycleConfig& cfg) {
  std::map<std::string, std::vector<const PreferenceChunk*>> by_category;
  for (const auto& c : state.preferences) by_category[c.category].push_back(&c);

  std::set<std::string> evict_ids;
  for (auto& [_, chunks] : by_category) {
    if (chunks.size() <= cfg.capacity_per_category) continue;
    std::sort(chunks.begin(), chunks.end(), [](const auto* a, const auto* b) {
      const auto sa = capacity_score(*a), sb = capacity_score(*b);
      if (sa != sb) return sa > sb;
      if (a->updated_at != b->updated_at) return a->updated_at > b->updated_at;
      return chunk_id_less(a->chunk_id, b->chunk_id);
    });
    for (std::size_t i = cfg.capacity_per_category; i < chunks.size(); ++i) {
      evict_ids.insert(chunks[i]->chunk_id);
    }
  }

  std::vector<PreferenceChunk> evicted;
  if (evict_ids.empty()) return evicted;
  std::vector<PreferenceChunk> kept;
  for (auto& c : state.preferences) {
    (evict_ids.count(c.chunk_id) ? evicted : kept).push_back(std::move(c));
  }
  state.preferences = std::move(kept);
  return evicted;
}

// ---- prompt sections ----

std::string format_preference_line(const PreferenceChunk& c) {
  return "- [" + c.chunk_id + "] (" + c.category + ") " + c.statement + " (strength " +
         fixed2(c.strength) + ", evidence " + std::to_string(c.evidence) + ")";
}

std::string format_preferences_by_category(const MemoryState& state) {
  std::vector<std::string> order;
  for (const auto& c : state.preferences) {
    if (std::find(order.begin(), order.end(), c.category) == order.end()) {
      order.push_back(c.category);
    }
  }
  std::string out;
  for (const auto& cat : order) {
    if (!out.empty()) out += "\n";
    out += "[" + cat + "]";
    for (const auto& c : state.preferences) {
      if (c.category != cat) continue;
      out += "\n- " + c.statement + " (strength " + fixed2(c.strength) + ", evidence " +
             std::to_string(c.evidence) + ")";
    }
  }
  return out;
}

std::string format_event_line(const EventSignal& e) {
  std::string line = "- [" + e.action + "] ";
  auto get = [&](const char* key) -> std::string {
    auto it = e.metadata.find(key);
    return it == e.metadata.end() ? std::string() : it->second;
  };
  const auto title = get("title");
  line += title.empty() ? e.item_id : title;
  const auto description = get("description");
  if (!description.empty()) line += ": " + description;
  std::string attrs;
  for (const auto& [k, v] : e.metadata) {
    if (k == "title" || k == "description") continue;
    attrs += (attrs.empty() ? "" : "; ") + k + "=" + v;
  }
  if (!attrs.empty()) line += " (" + attrs + ")";
  return line;
}

// ---- LLM-backed operations ----

ExtractResult apply_updates(MemoryState& state, std::span<const PreferenceUpdate> updates,
                            const LifecycleConfig& cfg, const DomainConfig& domain) {
  ExtractResult result;
  for (const auto& u : updates) {
    if (result.applied.size() == kMaxUpdatesPerExtraction) {
      result.warnings.push_back("update beyond the per-response limit dropped");
      continue;
    }
    if (u.action == UpdateAction::create) {
      auto cat = std::find_if(domain.categories.begin(), domain.categories.end(),
                              [&](const auto& c) { return lower(c) == lower(u.category); });
      if (cat == domain.categories.end()) {
        result.warnings.push_back("create with unknown category '" + u.category + "' dropped");
        continue;
      }
      if (u.statement.empty()) {
        result.warnings.push_back("create with empty statement dropped");
        continue;
      }
      PreferenceChunk c;
      c.chunk_id = state.allocate_chunk_id();
      c.category = *cat;
      c.statement = u.statement;
      c.strength = normalize_strength(u.strength);
      c.evidence = 1;
      c.created_at = c.updated_at = state.step;
      result.created_ids.push_back(c.chunk_id);
      state.preferences.push_back(std::move(c));
      state.mutation_count += 1;
    } else {
      const auto* target = resolve_target(state, u);
      if (!target) {
        result.warnings.push_back(std::string(to_string(u.action)) + " target '" + u.statement +
                                  "' not found");
        continue;
      }
      const auto id = target->chunk_id;
      if (u.action == UpdateAction::strengthen) {
        boost(state, id, cfg);
      } else {
        demote(state, id, cfg);
      }
    }
    result.applied.push_back(u);
  }
  return result;
}

ExtractResult extract(MemoryState& state, std::span<const EventSignal> events, Session& session,
                      const LifecycleConfig& cfg, const DomainConfig& domain) {
  if (events.empty()) throw Error(ErrorKind::validation, "extract needs at least one event");

  std::string table;
  for (const auto& e : events) table += (table.empty() ? "" : "\n") + format_event_line(e);
  std::string existing;
  for (const auto& c : state.preferences) {
    existing += (existing.empty() ? "" : "\n") + format_preference_line(c);
  }
  std::string categories;
  for (const auto& c : domain.categories) categories += (categories.empty() ? "" : " | ") + c;

  const auto request =
      render_prompt(PromptTag::extract, {{"item_noun", domain.item_noun},
                                         {"engagements_table", table},
                                         {"existing_preferences", existing.empty() ? "(none)" : existing},
                                         {"category_list", categories}});

  std::vector<std::string> warnings;
  auto parsed = complete_parsed(session, request, parse_extraction, &warnings);

  ExtractResult result;
  if (parsed) {
    result = apply_updates(state, parsed->updates, cfg, domain);
    result.warnings.insert(result.warnings.begin(), parsed->warnings.begin(),
                           parsed->warnings.end());
  } else {
    result.parse_failed = true;
    warnings.push_back("extraction response unparseable after retry; no updates applied");
  }
  result.warnings.insert(result.warnings.begin(), warnings.begin(), warnings.end());

  for (const auto& e : events) {
    for (auto& held : state.events) {
      if (held.event_id == e.event_id) held.processed = true;
    }
  }
  result.evicted = enforce_capacity(state, cfg);
  return result;
}

SynthesizeResult synthesize(MemoryState& state, Session& session) {
  SynthesizeResult result;
  auto commit = [&](std::string text) {
    state.profile.previous_text = std::move(state.profile.text);
    state.profile.text = std::move(text);
    state.profile.version += 1;
    state.profile.synthesized_at = state.step;
    state.mutation_count = 0;
    result.updated = true;
  };

  if (state.preferences.empty()) {
    commit(std::string(kEmptyProfileText));
    return result;
  }

  const auto request = render_prompt(
      PromptTag::synthesize,
      {{"chunks_text", format_preferences_by_category(state)},
       {"previous_profile", state.profile.text.empty() ? "(none)" : state.profile.text}});
  result.called_llm = true;
  std::string text;
  try {
    text = session.complete(request).text;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::empty_response) throw;
    result.warnings.push_back("synthesis returned an empty profile; previous profile kept");
    return result;
  }
  const auto b = text.find_first_not_of(" \t\r\n");
  const auto e = text.find_last_not_of(" \t\r\n");
  commit(text.substr(b, e - b + 1));
  return result;
}

}  // namespace tiermem
