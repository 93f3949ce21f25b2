#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tiermem {

inline constexpr int kStateSchemaVersion = 1;
inline constexpr std::size_t kDefaultEventWindow = 15;

// Action vocabulary accepted by default; deployments may widen it.
const std::vector<std::string>& default_event_actions();

struct EventSignal {
  std::string event_id;  // assigned by append_event when empty
  std::string user_id;
  std::string item_id;
  std::string action = "view";
  std::map<std::string, std::string> metadata;
  std::int64_t timestamp = 0;
  bool processed = false;

  bool operator==(const EventSignal&) const = default;
};

struct PreferenceChunk {
  std::string chunk_id;
  std::string category;
  std::string statement;
  double strength = 0.0;
  std::int64_t evidence = 1;
  std::int64_t created_at = 0;
  std::int64_t updated_at = 0;

  bool operator==(const PreferenceChunk&) const = default;
};

struct Profile {
  std::string text;
  std::string previous_text;
  std::int64_t version = 0;
  std::int64_t synthesized_at = 0;

  bool operator==(const Profile&) const = default;
};

// The per-user belief state: bounded event FIFO, preference chunks and the
// synthesized profile. Single writer; move between threads freely.
struct MemoryState {
  std::string user_id;
  std::vector<EventSignal> events;
  std::vector<PreferenceChunk> preferences;
  Profile profile;
  std::int64_t mutation_count = 0;
  std::int64_t step = 0;
  std::int64_t next_chunk_id = 1;

  bool operator==(const MemoryState&) const = default;

  std::vector<const EventSignal*> pending() const;
  std::size_t pending_count() const;

  PreferenceChunk* find_chunk(std::string_view chunk_id);
  const PreferenceChunk* find_chunk(std::string_view chunk_id) const;

  std::string allocate_chunk_id();
};

void validate_event(const EventSignal& event,
                    std::span<const std::string> allowed_actions = default_event_actions());

struct AppendOutcome {
  std::string event_id;
  std::optional<EventSignal> evicted;  // set when the FIFO dropped its oldest entry
};

// Appends as pending; evicts the oldest event once the window is exceeded.
AppendOutcome append_event(MemoryState& state, EventSignal event,
                           std::size_t event_window = kDefaultEventWindow);

// All ids must be present; on a miss nothing is changed.
void mark_processed(MemoryState& state, std::span<const std::string> event_ids);

// Chunk ids are "c<N>"; ordering by the numeric suffix.
bool chunk_id_less(std::string_view a, std::string_view b);

std::string to_json_text(const MemoryState& state);
MemoryState from_json_text(const std::string& text);

void save_state(const MemoryState& state, const std::filesystem::path& path);
MemoryState load_state(const std::filesystem::path& path);

}  // namespace tiermem
