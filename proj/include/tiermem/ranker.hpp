#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tiermem/gateway.hpp"
#include "tiermem/memory_state.hpp"

namespace tiermem {

inline constexpr std::size_t kDefaultRankBatch = 10;

struct Candidate {
  std::string item_id;
  std::string title;
  std::string description;
  std::map<std::string, std::string> attributes;

  bool operator==(const Candidate&) const = default;
};

struct RankedEntry {
  std::string item_id;
  double score = 5.0;
  std::string tier;
  std::string reason;
};

struct RankedList {
  std::vector<RankedEntry> entries;  // a permutation of the slate, scores non-increasing
  bool instruction_used = false;
  bool degraded = false;  // some batch fell back to default scores
  std::size_t calls = 0;
  std::vector<std::string> warnings;

  // 1-based position of `item_id`, 0 when absent.
  std::size_t rank_of(std::string_view item_id) const;
};

// Which memory tiers reach the ranking prompt. Default: profile + events.
struct TierFlags {
  bool use_profile = true;
  bool use_events = true;
  bool use_preferences = false;

  // Comma list of profile|event|preference, or "none".
  static TierFlags parse(std::string_view spec);
  std::string to_string() const;
  bool operator==(const TierFlags&) const = default;
};

// Prompt for one batch; exposed so tests can assert section content.
ChatRequest build_rank_prompt(std::span<const Candidate> batch, const MemoryState& memory,
                              const std::optional<std::string>& instruction, TierFlags tiers);

// Pointwise scoring of the slate from profile and recent events.
RankedList rank(std::span<const Candidate> candidates, const Profile& profile,
                std::span<const EventSignal> recent_events,
                const std::optional<std::string>& instruction, Session& session,
                std::size_t batch_size = kDefaultRankBatch);

RankedList rank_with_tiers(std::span<const Candidate> candidates, const MemoryState& memory,
                           const std::optional<std::string>& instruction, Session& session,
                           std::size_t batch_size, TierFlags tiers);

}  // namespace tiermem
