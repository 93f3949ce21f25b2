#include "tiermem/ranker.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "tiermem/error.hpp"
#include "tiermem/lifecycle.hpp"
#include "tiermem/parsing.hpp"
#include "tiermem/prompts.hpp"

namespace tiermem {

std::size_t RankedList::rank_of(std::string_view item_id) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].item_id == item_id) return i + 1;
  }
  return 0;
}

TierFlags TierFlags::parse(std::string_view spec) {
  TierFlags flags{false, false, false};
  if (spec == "none" || spec.empty()) return flags;
  std::size_t start = 0;
  while (start <= spec.size()) {
    auto end = spec.find(',', start);
    if (end == std::string_view::npos) end = spec.size();
    auto token = spec.substr(start, end - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (token == "profile") {
      flags.use_profile = true;
    } else if (token == "event" || token == "events") {
      flags.use_events = true;
    } else if (token == "preference" || token == "preferences") {
      flags.use_preferences = true;
    } else {
      throw Error(ErrorKind::config, "unknown memory tier '" + std::string(token) +
                                         "' (expected profile, event, preference or none)");
    }
    start = end + 1;
  }
  return flags;
}

std::string TierFlags::to_string() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (on) out += (out.empty() ? "" : ",") + std::string(name);
  };
  add(use_profile, "profile");
  add(use_events, "event");
  add(use_preferences, "preference");
  return out.empty() ? "none" : out;
}

ChatRequest build_rank_prompt(std::span<const Candidate> batch, const MemoryState& memory,
                              const std::optional<std::string>& instruction, TierFlags tiers) {
  std::string user_section;
  if (tiers.use_profile) {
    user_section = "User Profile:\n" +
                   (memory.profile.text.empty() ? std::string("(no profile yet)")
                                                : memory.profile.text);
  }
  if (tiers.use_preferences) {
    std::string prefs;
    for (const auto& c : memory.preferences) {
      prefs += (prefs.empty() ? "" : "\n") + format_preference_line(c);
    }
    if (!user_section.empty()) user_section += "\n\n";
    user_section += "Preference Memory:\n" + (prefs.empty() ? std::string("(none)") : prefs);
  }

  std::string session_section;
  if (tiers.use_events) {
    std::string lines;
    for (const auto& e : memory.events) lines += (lines.empty() ? "" : "\n") + format_event_line(e);
    session_section = "Recent Activity (oldest first):\n" +
                      (lines.empty() ? std::string("(no recent activity)") : lines);
  }

  std::string items;
  for (const auto& c : batch) {
    std::string row = c.item_id + " | " + (c.title.empty() ? c.item_id : c.title);
    if (!c.description.empty()) row += " | " + c.description;
    std::string attrs;
    for (const auto& [k, v] : c.attributes) attrs += (attrs.empty() ? "" : "; ") + k + "=" + v;
    if (!attrs.empty()) row += " | " + attrs;
    items += (items.empty() ? "" : "\n") + row;
  }

  PromptContext ctx{{"user_profile_section", user_section},
                    {"session_memory_section", session_section},
                    {"items_table", items}};
  if (instruction) {
    ctx["instruction_section"] =
        "User Instruction (takes priority over the historical preferences above):\n" +
        *instruction;
  }
  return render_prompt(PromptTag::rank, ctx);
}

RankedList rank_with_tiers(std::span<const Candidate> candidates, const MemoryState& memory,
                           const std::optional<std::string>& instruction, Session& session,
                           std::size_t batch_size, TierFlags tiers) {
  if (candidates.empty()) throw Error(ErrorKind::validation, "ranking needs at least one candidate");
  if (batch_size < 1) throw Error(ErrorKind::validation, "batch_size must be >= 1");
  std::set<std::string> seen;
  for (const auto& c : candidates) {
    if (!seen.insert(c.item_id).second) {
      throw Error(ErrorKind::validation, "duplicate candidate id '" + c.item_id + "'");
    }
  }

  RankedList out;
  out.instruction_used = instruction.has_value();
  std::vector<RankedEntry> scored(candidates.size());
  for (std::size_t begin = 0; begin < candidates.size(); begin += batch_size) {
    const auto batch = candidates.subspan(begin, std::min(batch_size, candidates.size() - begin));
    std::vector<std::string> ids;
    for (const auto& c : batch) ids.push_back(c.item_id);

    const auto request = build_rank_prompt(batch, memory, instruction, tiers);
    const auto calls_before = session.usage().calls;
    auto parsed = complete_parsed(
        session, request, [&](const std::string& text) { return parse_ranking(text, ids); },
        &out.warnings);
    out.calls += static_cast<std::size_t>(session.usage().calls - calls_before);
    if (!parsed) {
      out.degraded = true;
      out.warnings.push_back("ranking batch fell back to default scores");
    } else {
      out.warnings.insert(out.warnings.end(), parsed->warnings.begin(), parsed->warnings.end());
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ItemScore s;
      if (parsed) s = parsed->scores.at(ids[i]);
      scored[begin + i] = RankedEntry{ids[i], s.score, s.tier, s.reason};
    }
  }

  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].score > scored[b].score; });
  out.entries.reserve(order.size());
  for (auto i : order) out.entries.push_back(std::move(scored[i]));
  return out;
}

RankedList rank(std::span<const Candidate> candidates, const Profile& profile,
                std::span<const EventSignal> recent_events,
                const std::optional<std::string>& instruction, Session& session,
                std::size_t batch_size) {
  MemoryState view;
  view.profile = profile;
  view.events.assign(recent_events.begin(), recent_events.end());
  return rank_with_tiers(candidates, view, instruction, session, batch_size, TierFlags{});
}

}  // namespace tiermem
