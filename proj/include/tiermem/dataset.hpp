#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tiermem/gateway.hpp"
#include "tiermem/memory_state.hpp"
#include "tiermem/ranker.hpp"

namespace tiermem {

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
  std::string action = "view";
  std::optional<double> rating;
  std::optional<std::string> instruction;
  std::size_t position = 0;  // file order, breaks timestamp ties
};

struct ItemInfo {
  std::string item_id;
  std::string title;
  std::string description;
  std::map<std::string, std::string> attributes;
};

// Immutable once loaded; safe to share between worker threads.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<InteractionRecord> interactions, std::vector<ItemInfo> items);

  // Per-user lists ordered by (timestamp, position).
  const std::map<std::string, std::vector<InteractionRecord>>& users() const { return users_; }
  const std::vector<InteractionRecord>& history(const std::string& user_id) const;
  const std::map<std::string, ItemInfo>& items() const { return items_; }

  std::vector<std::string> user_ids() const;
  // Every known item id (metadata index plus interacted items), sorted.
  const std::vector<std::string>& item_pool() const { return pool_; }
  std::size_t interaction_count() const { return interaction_count_; }
  std::size_t distinct_interacted_items() const { return distinct_items_; }

  Candidate candidate(const std::string& item_id) const;
  EventSignal to_event(const InteractionRecord& record) const;

  // Keeps only the listed users (in the dataset's own order).
  Dataset restricted_to(std::span<const std::string> user_ids) const;

  std::size_t malformed_lines = 0;
  std::size_t unknown_item_refs = 0;
  std::vector<std::string> warnings;

 private:
  void index(std::vector<InteractionRecord> interactions);

  std::map<std::string, std::vector<InteractionRecord>> users_;
  std::map<std::string, ItemInfo> items_;
  std::vector<std::string> pool_;
  std::size_t interaction_count_ = 0;
  std::size_t distinct_items_ = 0;
};

inline constexpr double kMaxMalformedFraction = 0.01;

// Line-delimited JSON. Interactions need user_id, item_id and timestamp;
// items need item_id. More than 1% malformed lines is a hard error.
Dataset load_dataset(const std::filesystem::path& interactions_path,
                     const std::optional<std::filesystem::path>& items_path,
                     std::span<const std::string> allowed_actions = default_event_actions());

struct DatasetStats {
  std::int64_t users = 0;
  std::int64_t items = 0;
  std::int64_t interactions = 0;
  double density = 0.0;  // interactions / (users * items), as a fraction
  double avg_per_user = 0.0;
};

DatasetStats compute_stats(std::int64_t users, std::int64_t items, std::int64_t interactions);
// Items are the distinct items that appear in interactions.
DatasetStats compute_stats(const Dataset& dataset);

// Users whose interaction count lies in [min_count, max_count], sorted by id,
// then n drawn without replacement (draw order) with the given seed.
std::vector<std::string> subsample_users(const Dataset& dataset, std::size_t min_count,
                                         std::size_t max_count, std::size_t n,
                                         std::uint64_t seed);

// Published per-domain category lists; nullopt for an unknown domain.
std::optional<std::vector<std::string>> default_categories(std::string_view domain);

// The n most-interacted items (ties by id).
std::vector<ItemInfo> most_interacted_items(const Dataset& dataset, std::size_t n);

inline constexpr std::size_t kCategoryCount = 6;
inline constexpr std::size_t kCategorySampleItems = 10;

// One LLM call over sample items, cached in <cache_dir>/<domain>.categories.json.
// Returns the cached list without calling when the cache file exists.
std::vector<std::string> generate_categories(const std::string& domain_name,
                                             const std::string& item_noun,
                                             std::span<const ItemInfo> sample_items,
                                             Session& session,
                                             const std::filesystem::path& cache_dir);

}  // namespace tiermem
