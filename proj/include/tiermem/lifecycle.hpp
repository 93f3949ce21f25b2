#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tiermem/gateway.hpp"
#include "tiermem/memory_state.hpp"
#include "tiermem/parsing.hpp"

namespace tiermem {

enum class ForgetGuard { strict, planner_trusted };

std::string_view to_string(ForgetGuard guard) noexcept;
ForgetGuard forget_guard_from_string(std::string_view name);

struct LifecycleConfig {
  double boost_step = 0.1;
  double demote_step = 0.2;  // larger than boost_step: contradiction erodes faster
  double forget_strength_threshold = 0.1;
  std::int64_t forget_evidence_threshold = 5;
  std::int64_t synthesis_trigger = 5;
  std::size_t capacity_per_category = 8;
  ForgetGuard forget_guard = ForgetGuard::planner_trusted;

  // Throws Error{config} naming the offending field.
  void validate() const;
};

struct DomainConfig {
  std::string name = "books";
  std::string item_noun = "books";
  std::vector<std::string> categories = {"genre",  "writing style", "theme",
                                         "setting", "author type",   "mood"};
};

// Placeholder profile for a user with no preference chunks.
inline constexpr std::string_view kEmptyProfileText =
    "This user has no established preferences yet.";

// Clamps to [-1, 1] and snaps to a 1e-6 grid so replays stay byte-stable.
double normalize_strength(double strength);

// Capacity score evidence * |strength| in micro-units (exact integer ordering).
std::int64_t capacity_score(const PreferenceChunk& chunk);

void boost(MemoryState& state, std::string_view chunk_id, const LifecycleConfig& cfg);
void demote(MemoryState& state, std::string_view chunk_id, const LifecycleConfig& cfg);

// Collapses >= 2 same-category chunks into the first source's slot. Returns
// the surviving chunk id. Validation failures leave the state untouched.
std::string merge(MemoryState& state, std::span<const std::string> source_ids,
                  std::string_view merged_statement, const LifecycleConfig& cfg);

enum class ForgetOutcome { deleted, guard_rejected };

ForgetOutcome forget(MemoryState& state, std::string_view chunk_id, const LifecycleConfig& cfg);

// Keeps the top-K chunks per category; does not count as a mutation.
std::vector<PreferenceChunk> enforce_capacity(MemoryState& state, const LifecycleConfig& cfg);

struct ExtractResult {
  std::vector<PreferenceUpdate> applied;
  std::vector<std::string> created_ids;
  std::vector<PreferenceChunk> evicted;
  std::vector<std::string> warnings;
  bool parse_failed = false;
};

// One extraction call over `events`; applies at most five updates, marks the
// events that are still in event memory as processed, then enforces capacity.
// Transport errors propagate to the caller.
ExtractResult extract(MemoryState& state, std::span<const EventSignal> events, Session& session,
                      const LifecycleConfig& cfg, const DomainConfig& domain);

// Creates/strengthens/weakens from already-parsed updates (no LLM call).
ExtractResult apply_updates(MemoryState& state, std::span<const PreferenceUpdate> updates,
                            const LifecycleConfig& cfg, const DomainConfig& domain);

struct SynthesizeResult {
  bool updated = false;
  bool called_llm = false;
  std::vector<std::string> warnings;
};

// Regenerates the profile from all chunks and the previous profile text.
SynthesizeResult synthesize(MemoryState& state, Session& session);

// Prompt sections shared with the planner and the ranker.
std::string format_preference_line(const PreferenceChunk& chunk);
std::string format_preferences_by_category(const MemoryState& state);
std::string format_event_line(const EventSignal& event);

}  // namespace tiermem
