#include "test_support.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>

#include "tiermem/evaluation.hpp"
#include "tiermem/rng.hpp"

#ifndef TIERMEM_SOURCE_DIR
#error "TIERMEM_SOURCE_DIR must be defined"
#endif

namespace tiermem::testing {

using json = nlohmann::json;

std::filesystem::path source_dir() { return TIERMEM_SOURCE_DIR; }
std::filesystem::path case_study_fixture() { return source_dir() / "fixtures" / "case_study.json"; }

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto base = std::filesystem::temp_directory_path();
  for (;;) {
    auto p = base / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    if (std::filesystem::create_directory(p)) {
      path_ = p;
      return;
    }
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

EventSignal make_event(const std::string& user, const std::string& item, std::int64_t ts,
                       const std::string& title, const std::string& description) {
  EventSignal e;
  e.user_id = user;
  e.item_id = item;
  e.timestamp = ts;
  if (!title.empty()) e.metadata["title"] = title;
  if (!description.empty()) e.metadata["description"] = description;
  return e;
}

PreferenceChunk make_chunk(const std::string& id, const std::string& category,
                           const std::string& statement, double strength, std::int64_t evidence,
                           std::int64_t updated_at) {
  PreferenceChunk c;
  c.chunk_id = id;
  c.category = category;
  c.statement = statement;
  c.strength = strength;
  c.evidence = evidence;
  c.created_at = 0;
  c.updated_at = updated_at;
  return c;
}

CohortFiles write_synthetic_cohort(const std::filesystem::path& dir, const CohortSpec& spec) {
  static const char* kGenres[] = {"mystery", "fantasy", "history", "romance", "science",
                                  "poetry",  "travel",  "cooking", "theology", "biography"};
  CohortFiles files{dir / "interactions.jsonl", dir / "items.jsonl"};
  DeterministicRng rng(spec.seed);

  std::ofstream items(files.items, std::ios::binary);
  for (std::size_t i = 0; i < spec.items; ++i) {
    const auto genre = kGenres[i % 10];
    json j;
    j["item_id"] = "i" + std::to_string(i);
    j["title"] = std::string("A ") + genre + " book no. " + std::to_string(i);
    j["description"] = std::string("Readers of ") + genre + " will enjoy volume " +
                       std::to_string(i) + ".";
    j["attributes"] = {{"genre", genre}};
    items << j.dump() << "\n";
  }

  std::ofstream inter(files.interactions, std::ios::binary);
  for (std::size_t u = 0; u < spec.users; ++u) {
    const auto user = "user" + std::to_string(1000 + u);
    const auto span = spec.max_interactions - spec.min_interactions + 1;
    const auto n = spec.min_interactions + rng.below(span);
    const auto favourite = rng.below(10);
    std::int64_t ts = 1'700'000'000 + static_cast<std::int64_t>(u) * 1000;
    std::vector<std::size_t> picked;
    for (std::size_t k = 0; k < n; ++k) {
      // mostly the favourite genre, distinct items
      std::size_t item;
      do {
        const auto genre = rng.below(4) == 0 ? rng.below(10) : favourite;
        item = genre + 10 * rng.below(spec.items / 10);
      } while (std::find(picked.begin(), picked.end(), item) != picked.end());
      picked.push_back(item);
      ts += 1 + static_cast<std::int64_t>(rng.below(5000));
      json j;
      j["user_id"] = user;
      j["item_id"] = "i" + std::to_string(item);
      j["timestamp"] = ts;
      j["action"] = k % 4 == 0 ? "rate" : "read";
      if (k % 4 == 0) j["rating"] = 1 + static_cast<int>(rng.below(5));
      if (k + 1 == n && u % 3 == 0) j["instruction"] = "Something lighter than usual, please.";
      inter << j.dump() << "\n";
    }
  }
  return files;
}

json base_script(std::size_t items) {
  // a score line for every cohort item; unknown ids are ignored by the parser
  std::string rank;
  for (std::size_t i = 0; i < items; ++i) {
    const auto score = (i * 7) % 10;
    rank += "i" + std::to_string(i) + " | " + std::to_string(score) + " | " +
            (score >= 8 ? "STRONG" : score >= 4 ? "MAYBE" : "WEAK") + " | no strong opinion\n";
  }
  json script;
  script["defaults"] = {
      {"extract",
       R"([{"action":"create","category":"genre","text":"Gravitates to one favourite genre","strength":0.7},)"
       R"({"action":"create","category":"mood","text":"Prefers steady, reflective pacing","strength":0.4}])"},
      {"synthesize",
       "This reader returns again and again to a single favourite genre and tends to choose "
       "calm, reflective books over fast-paced ones."},
      {"plan", R"({"actions": []})"},
      {"rank", rank},
      {"categorize", R"(["genre","writing style","theme","setting","author type","mood"])"},
  };
  script["responses"] = json::array();
  return script;
}

void add_oracle_rankings(json& script, const Dataset& dataset, std::uint64_t seed,
                         double gt_score) {
  for (const auto& user : dataset.user_ids()) {
    auto t = make_test_instance(dataset, user, seed);
    if (!t) continue;
    std::string lines;
    int neg = 0;
    for (const auto& c : t->slate) {
      const double s = c.item_id == t->ground_truth.item_id ? gt_score : neg++;
      std::ostringstream line;
      line << c.item_id << " | " << s << " | " << (s >= 8 ? "STRONG" : "WEAK") << " | scripted\n";
      lines += line.str();
    }
    script["responses"].push_back({{"tag", "rank"}, {"user", user}, {"response", lines}});
  }
}

void add_busy_planner(json& script) {
  const char* rounds[] = {
      R"({"actions":[{"tool":"extract"}]})",
      R"({"actions":[{"tool":"boost","params":{"statement":"Gravitates to one favourite genre"}},{"tool":"demote","params":{"statement":"Prefers steady, reflective pacing"}},{"tool":"extract"}]})",
      R"({"actions":[{"tool":"merge","params":{"source_ids":["c1","c3"],"merged_statement":"Loyal to one favourite genre"}},{"tool":"forget","params":{"chunk_id":"c2"}}]})",
      R"({"actions":[{"tool":"extract"},{"tool":"boost","params":{"chunk_id":"c1"}},{"tool":"reweight","params":{}}]})",
  };
  int seq = 1;
  for (const char* r : rounds) {
    script["responses"].push_back({{"tag", "plan"}, {"seq", seq++}, {"response", r}});
  }
  script["defaults"]["plan"] = R"({"actions":[{"tool":"extract"}]})";
}

}  // namespace tiermem::testing
