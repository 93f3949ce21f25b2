#include "tiermem/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tiermem/error.hpp"
#include "tiermem/prompts.hpp"
#include "tiermem/parsing.hpp"
#include "tiermem/rng.hpp"

namespace tiermem {

using json = nlohmann::json;

Dataset::Dataset(std::vector<InteractionRecord> interactions, std::vector<ItemInfo> items) {
  for (auto& item : items) {
    auto id = item.item_id;
    items_.insert_or_assign(std::move(id), std::move(item));
  }
  index(std::move(interactions));
}

void Dataset::index(std::vector<InteractionRecord> interactions) {
  users_.clear();
  interaction_count_ = interactions.size();
  std::set<std::string> pool;
  std::set<std::string> interacted;
  for (const auto& [id, _] : items_) pool.insert(id);
  for (auto& r : interactions) {
    pool.insert(r.item_id);
    interacted.insert(r.item_id);
    users_[r.user_id].push_back(std::move(r));
  }
  for (auto& [_, list] : users_) {
    std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
      return a.position < b.position;
    });
  }
  pool_.assign(pool.begin(), pool.end());
  distinct_items_ = interacted.size();
}

const std::vector<InteractionRecord>& Dataset::history(const std::string& user_id) const {
  auto it = users_.find(user_id);
  if (it == users_.end()) throw Error(ErrorKind::not_found, "unknown user '" + user_id + "'");
  return it->second;
}

std::vector<std::string> Dataset::user_ids() const {
  std::vector<std::string> ids;
  ids.reserve(users_.size());
  for (const auto& [id, _] : users_) ids.push_back(id);
  return ids;
}

Candidate Dataset::candidate(const std::string& item_id) const {
  Candidate c;
  c.item_id = item_id;
  if (auto it = items_.find(item_id); it != items_.end()) {
    c.title = it->second.title;
    c.description = it->second.description;
    c.attributes = it->second.attributes;
  }
  return c;
}

EventSignal Dataset::to_event(const InteractionRecord& r) const {
  EventSignal e;
  e.user_id = r.user_id;
  e.item_id = r.item_id;
  e.action = r.action;
  e.timestamp = r.timestamp;
  if (auto it = items_.find(r.item_id); it != items_.end()) {
    if (!it->second.title.empty()) e.metadata["title"] = it->second.title;
    if (!it->second.description.empty()) e.metadata["description"] = it->second.description;
    for (const auto& [k, v] : it->second.attributes) e.metadata[k] = v;
  }
  if (r.rating) {
    std::ostringstream os;
    os << *r.rating;
    e.metadata["rating"] = os.str();
  }
  return e;
}

Dataset Dataset::restricted_to(std::span<const std::string> user_ids) const {
  std::set<std::string> keep(user_ids.begin(), user_ids.end());
  std::vector<InteractionRecord> rows;
  for (const auto& [id, list] : users_) {
    if (keep.count(id)) rows.insert(rows.end(), list.begin(), list.end());
  }
  std::vector<ItemInfo> items;
  for (const auto& [_, info] : items_) items.push_back(info);
  Dataset out(std::move(rows), std::move(items));
  out.malformed_lines = malformed_lines;
  out.unknown_item_refs = unknown_item_refs;
  out.warnings = warnings;
  return out;
}

namespace {

std::optional<std::string> id_field(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const auto& v = j[key];
  std::string s;
  if (v.is_string()) {
    s = v.get<std::string>();
  } else if (v.is_number_integer()) {
    s = std::to_string(v.get<std::int64_t>());
  } else {
    return std::nullopt;
  }
  if (s.empty()) return std::nullopt;
  return s;
}

std::optional<std::int64_t> timestamp_field(const json& j) {
  if (!j.contains("timestamp")) return std::nullopt;
  const auto& v = j["timestamp"];
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const auto d = v.get<double>();
    if (d != static_cast<double>(static_cast<std::int64_t>(d))) return std::nullopt;
    return static_cast<std::int64_t>(d);
  }
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
      return std::nullopt;
    }
    try {
      return std::stoll(s);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::string scalar_text(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

template <typename OnRecord>
void read_jsonl(const std::filesystem::path& path, const char* what, OnRecord&& on_record,
                std::size_t& malformed, std::size_t& total) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::data, std::string("cannot open ") + what + " file " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++total;
    try {
      if (!on_record(json::parse(line), total - 1)) ++malformed;
    } catch (const json::exception&) {
      ++malformed;
    }
  }
  if (total > 0 && static_cast<double>(malformed) / static_cast<double>(total) > kMaxMalformedFraction) {
    throw Error(ErrorKind::data, std::string(what) + " file " + path.string() + " has " +
                                     std::to_string(malformed) + " malformed of " +
                                     std::to_string(total) + " lines (limit 1%)");
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& interactions_path,
                     const std::optional<std::filesystem::path>& items_path,
                     std::span<const std::string> allowed_actions) {
  std::size_t malformed = 0, total = 0;
  std::vector<ItemInfo> items;
  if (items_path) {
    std::size_t item_malformed = 0, item_total = 0;
    read_jsonl(
        *items_path, "items",
        [&](const json& j, std::size_t) {
          if (!j.is_object()) return false;
          auto id = id_field(j, "item_id");
          if (!id) return false;
          ItemInfo info;
          info.item_id = *id;
          for (const auto& [k, v] : j.items()) {
            if (k == "item_id") continue;
            if (k == "title" && v.is_string()) {
              info.title = v.get<std::string>();
            } else if (k == "description" && v.is_string()) {
              info.description = v.get<std::string>();
            } else if (k == "attributes" && v.is_object()) {
              for (const auto& [ak, av] : v.items()) info.attributes[ak] = scalar_text(av);
            } else if (!v.is_null() && !v.is_object() && !v.is_array()) {
              info.attributes[k] = scalar_text(v);
            }
          }
          items.push_back(std::move(info));
          return true;
        },
        item_malformed, item_total);
    malformed += item_malformed;
  }

  std::set<std::string> known;
  for (const auto& i : items) known.insert(i.item_id);

  std::vector<InteractionRecord> rows;
  std::size_t row_malformed = 0;
  std::size_t unknown = 0;
  read_jsonl(
      interactions_path, "interactions",
      [&](const json& j, std::size_t position) {
        if (!j.is_object()) return false;
        auto user = id_field(j, "user_id");
        auto item = id_field(j, "item_id");
        auto ts = timestamp_field(j);
        if (!user || !item || !ts || *ts < 0) return false;
        InteractionRecord r;
        r.user_id = *user;
        r.item_id = *item;
        r.timestamp = *ts;
        r.position = position;
        if (j.contains("action")) {
          if (!j["action"].is_string()) return false;
          r.action = j["action"].get<std::string>();
          if (!allowed_actions.empty() &&
              std::find(allowed_actions.begin(), allowed_actions.end(), r.action) ==
                  allowed_actions.end()) {
            return false;
          }
        }
        if (j.contains("rating") && !j["rating"].is_null()) {
          if (!j["rating"].is_number()) return false;
          r.rating = j["rating"].get<double>();
        }
        if (j.contains("instruction") && j["instruction"].is_string() &&
            !j["instruction"].get<std::string>().empty()) {
          r.instruction = j["instruction"].get<std::string>();
        }
        if (items_path && !known.count(r.item_id)) ++unknown;
        rows.push_back(std::move(r));
        return true;
      },
      row_malformed, total);
  malformed += row_malformed;

  Dataset ds(std::move(rows), std::move(items));
  ds.malformed_lines = malformed;
  ds.unknown_item_refs = unknown;
  if (malformed) ds.warnings.push_back(std::to_string(malformed) + " malformed lines skipped");
  if (unknown) {
    ds.warnings.push_back(std::to_string(unknown) +
                          " interactions reference items without metadata");
  }
  return ds;
}

DatasetStats compute_stats(std::int64_t users, std::int64_t items, std::int64_t interactions) {
  DatasetStats s{users, items, interactions, 0.0, 0.0};
  if (users > 0 && items > 0) {
    s.density = static_cast<double>(interactions) /
                (static_cast<double>(users) * static_cast<double>(items));
  }
  if (users > 0) s.avg_per_user = static_cast<double>(interactions) / static_cast<double>(users);
  return s;
}

DatasetStats compute_stats(const Dataset& dataset) {
  return compute_stats(static_cast<std::int64_t>(dataset.users().size()),
                       static_cast<std::int64_t>(dataset.distinct_interacted_items()),
                       static_cast<std::int64_t>(dataset.interaction_count()));
}

std::vector<std::string> subsample_users(const Dataset& dataset, std::size_t min_count,
                                         std::size_t max_count, std::size_t n,
                                         std::uint64_t seed) {
  std::vector<std::string> eligible;
  for (const auto& [id, list] : dataset.users()) {
    if (list.size() >= min_count && list.size() <= max_count) eligible.push_back(id);
  }
  if (eligible.size() < n) {
    throw Error(ErrorKind::data, "only " + std::to_string(eligible.size()) + " users have " +
                                     std::to_string(min_count) + "-" + std::to_string(max_count) +
                                     " interactions; " + std::to_string(n) + " requested (short by " +
                                     std::to_string(n - eligible.size()) + ")");
  }
  // std::map iteration already yields lexicographic order.
  DeterministicRng rng(seed);
  return rng.sample(std::move(eligible), n);
}

std::optional<std::vector<std::string>> default_categories(std::string_view domain) {
  std::string d(domain);
  std::transform(d.begin(), d.end(), d.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (d == "books") return std::vector<std::string>{"genre", "writing style", "theme",
                                                    "setting", "author type", "mood"};
  if (d == "goodreads") return std::vector<std::string>{"genre", "writing style", "theme",
                                                        "series preference", "mood",
                                                        "character type"};
  if (d == "movietv" || d == "movies_tv" || d == "movies") {
    return std::vector<std::string>{"genre", "mood", "era", "theme", "quality", "pacing"};
  }
  if (d == "yelp") return std::vector<std::string>{"cuisine", "price range", "ambiance",
                                                   "occasion", "location", "service"};
  return std::nullopt;
}

std::vector<ItemInfo> most_interacted_items(const Dataset& dataset, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  for (const auto& [_, list] : dataset.users()) {
    for (const auto& r : list) counts[r.item_id]++;
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<ItemInfo> out;
  for (const auto& [id, _] : ranked) {
    if (out.size() == n) break;
    auto it = dataset.items().find(id);
    if (it != dataset.items().end()) {
      out.push_back(it->second);
    } else {
      out.push_back(ItemInfo{id, {}, {}, {}});
    }
  }
  return out;
}

std::vector<std::string> generate_categories(const std::string& domain_name,
                                             const std::string& item_noun,
                                             std::span<const ItemInfo> sample_items,
                                             Session& session,
                                             const std::filesystem::path& cache_dir) {
  const auto cache = cache_dir / (domain_name + ".categories.json");
  if (std::filesystem::exists(cache)) {
    std::ifstream in(cache);
    try {
      auto j = json::parse(in);
      auto cats = j.at("categories").get<std::vector<std::string>>();
      if (cats.size() == kCategoryCount) return cats;
    } catch (const json::exception&) {
    }
    throw Error(ErrorKind::data, "category cache " + cache.string() + " is corrupt");
  }

  std::size_t described = 0;
  std::string samples;
  for (const auto& item : sample_items) {
    if (described == kCategorySampleItems) break;
    if (item.description.empty()) continue;
    ++described;
    samples += (samples.empty() ? "" : "\n") + std::string("- ") +
               (item.title.empty() ? item.item_id : item.title) + ": " + item.description;
  }
  if (described < kCategorySampleItems) {
    throw Error(ErrorKind::data, "category generation needs 10 items with descriptions, got " +
                                     std::to_string(described));
  }

  const auto request = render_prompt(
      PromptTag::categorize,
      {{"item_noun", item_noun}, {"domain_name", domain_name}, {"sample_items", samples}});
  auto parsed = complete_parsed(session, request, parse_string_list);
  if (!parsed || parsed->size() < kCategoryCount) {
    throw Error(ErrorKind::parse,
                "category generation returned fewer than 6 categories; fall back to the "
                "published defaults for this domain");
  }
  parsed->resize(kCategoryCount);

  std::filesystem::create_directories(cache_dir);
  std::ofstream out(cache);
  if (!out) throw Error(ErrorKind::io, "cannot write category cache " + cache.string());
  out << json{{"domain", domain_name}, {"categories", *parsed}}.dump(2) << "\n";
  return *parsed;
}

}  // namespace tiermem
