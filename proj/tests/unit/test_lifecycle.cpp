#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "test_support.hpp"
#include "tiermem/error.hpp"
#include "tiermem/lifecycle.hpp"

using namespace tiermem;
using tiermem::testing::make_chunk;
using tiermem::testing::make_event;

namespace {

MemoryState one_chunk(double strength, std::int64_t evidence = 3) {
  MemoryState s;
  s.user_id = "u";
  s.next_chunk_id = 2;
  s.preferences.push_back(make_chunk("c1", "topic", "Christianity", strength, evidence));
  return s;
}

std::vector<std::string> ids(const MemoryState& s) {
  std::vector<std::string> out;
  for (const auto& c : s.preferences) out.push_back(c.chunk_id);
  return out;
}

}  // namespace

TEST(Boost, RaisesByStepAndCountsEvidence) {
  LifecycleConfig cfg;
  auto s = one_chunk(0.8);
  s.step = 12;
  boost(s, "c1", cfg);
  EXPECT_DOUBLE_EQ(s.preferences[0].strength, 0.9);
  EXPECT_EQ(s.preferences[0].evidence, 4);
  EXPECT_EQ(s.preferences[0].updated_at, 12);
  EXPECT_EQ(s.mutation_count, 1);
}

TEST(Boost, SaturatesAtOne) {
  LifecycleConfig cfg;
  auto s = one_chunk(0.95);
  boost(s, "c1", cfg);
  EXPECT_DOUBLE_EQ(s.preferences[0].strength, 1.0);
  boost(s, "c1", cfg);
  EXPECT_DOUBLE_EQ(s.preferences[0].strength, 1.0);
  EXPECT_EQ(s.preferences[0].evidence, 5);
}

TEST(Demote, LowersByTheLargerStepAndCrossesZero) {
  LifecycleConfig cfg;
  auto s = one_chunk(0.1);
  demote(s, "c1", cfg);
  EXPECT_DOUBLE_EQ(s.preferences[0].strength, -0.1);
  auto t = one_chunk(-0.9);
  demote(t, "c1", cfg);
  EXPECT_DOUBLE_EQ(t.preferences[0].strength, -1.0);
}

TEST(Demote, ErodesFasterThanBoostBuilds) {
  // one contradiction outweighs one confirmation
  LifecycleConfig cfg;
  auto s = one_chunk(0.5);
  boost(s, "c1", cfg);
  demote(s, "c1", cfg);
  EXPECT_LT(s.preferences[0].strength, 0.5);
  EXPECT_NEAR(s.preferences[0].strength, 0.5 + cfg.boost_step - cfg.demote_step, 1e-9);
}

TEST(Boost, RepeatedStepsStayOnTheMicroGrid) {
  LifecycleConfig cfg;
  auto s = one_chunk(-1.0);
  for (int i = 0; i < 20; ++i) boost(s, "c1", cfg);
  EXPECT_DOUBLE_EQ(s.preferences[0].strength, 1.0);
  auto t = one_chunk(0.0);
  for (int i = 0; i < 7; ++i) boost(t, "c1", cfg);
  EXPECT_EQ(t.preferences[0].strength, 0.7);  // exact, not 0.7000000000000001
}

TEST(Boost, UnknownChunkIsNotFound) {
  LifecycleConfig cfg;
  auto s = one_chunk(0.5);
  auto before = s;
  try {
    boost(s, "c9", cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_found);
  }
  EXPECT_EQ(s, before);
}

TEST(Merge, EvidenceWeightedMean) {
  LifecycleConfig cfg;
  MemoryState s;
  s.step = 30;
  s.preferences = {make_chunk("c1", "author", "Calvin", 0.9, 3),
                   make_chunk("c2", "topic", "Grace", 0.2, 1),
                   make_chunk("c3", "author", "John Calvin's sermons", 0.5, 1)};
  std::vector<std::string> src{"c1", "c3"};
  auto survivor = merge(s, src, "", cfg);
  EXPECT_EQ(survivor, "c1");
  ASSERT_EQ(ids(s), (std::vector<std::string>{"c1", "c2"}));
  const auto& m = s.preferences[0];
  EXPECT_DOUBLE_EQ(m.strength, (0.9 * 3 + 0.5 * 1) / 4.0);
  EXPECT_DOUBLE_EQ(m.strength, 0.8);
  EXPECT_EQ(m.evidence, 4);
  EXPECT_EQ(m.statement, "John Calvin's sermons");  // longest when none given
  EXPECT_EQ(m.updated_at, 30);
  EXPECT_EQ(s.mutation_count, 1);
}

TEST(Merge, EqualEvidenceGivesPlainMean) {
  LifecycleConfig cfg;
  MemoryState s;
  s.preferences = {make_chunk("c1", "genre", "a", 1.0, 2), make_chunk("c2", "genre", "b", 0.5, 2)};
  std::vector<std::string> src{"c1", "c2"};
  merge(s, src, "ab", cfg);
  EXPECT_DOUBLE_EQ(s.preferences[0].strength, 0.75);
  EXPECT_EQ(s.preferences[0].statement, "ab");
}

TEST(Merge, CrossCategoryOrSingleSourceRejectedUntouched) {
  LifecycleConfig cfg;
  MemoryState s;
  s.preferences = {make_chunk("c1", "genre", "a", 1.0), make_chunk("c2", "mood", "b", 0.5)};
  auto before = s;
  std::vector<std::string> cross{"c1", "c2"};
  try {
    merge(s, cross, "", cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
  }
  std::vector<std::string> single{"c1"};
  EXPECT_THROW(merge(s, single, "", cfg), Error);
  std::vector<std::string> dup{"c1", "c1"};
  EXPECT_THROW(merge(s, dup, "", cfg), Error);
  std::vector<std::string> missing{"c1", "c7"};
  EXPECT_THROW(merge(s, missing, "", cfg), Error);
  EXPECT_EQ(s, before);
}

TEST(Forget, PlannerTrustedDeletesAnything) {
  LifecycleConfig cfg;
  auto s = one_chunk(0.9, 1);
  EXPECT_EQ(forget(s, "c1", cfg), ForgetOutcome::deleted);
  EXPECT_TRUE(s.preferences.empty());
  EXPECT_EQ(s.mutation_count, 1);
}

TEST(Forget, StrictGuard) {
  LifecycleConfig cfg;
  cfg.forget_guard = ForgetGuard::strict;
  struct Case {
    double strength;
    std::int64_t evidence;
    ForgetOutcome expected;
  };
  for (const auto& c : {Case{0.05, 6, ForgetOutcome::deleted}, Case{-0.05, 5, ForgetOutcome::deleted},
                        Case{0.05, 4, ForgetOutcome::guard_rejected},
                        Case{0.1, 9, ForgetOutcome::guard_rejected},
                        Case{0.9, 9, ForgetOutcome::guard_rejected}}) {
    auto s = one_chunk(c.strength, c.evidence);
    auto before = s;
    EXPECT_EQ(forget(s, "c1", cfg), c.expected) << c.strength << " " << c.evidence;
    if (c.expected == ForgetOutcome::guard_rejected) EXPECT_EQ(s, before);
  }
  EXPECT_EQ(forget_guard_from_string("strict"), ForgetGuard::strict);
  EXPECT_THROW(forget_guard_from_string("lenient"), Error);
}

TEST(Capacity, ScoreIsIntegerMicroUnits) {
  EXPECT_EQ(capacity_score(make_chunk("c1", "g", "s", -0.5, 3)), 1'500'000);
  EXPECT_EQ(capacity_score(make_chunk("c1", "g", "s", 0.0, 9)), 0);
}

TEST(Capacity, AtLimitUnchanged) {
  LifecycleConfig cfg;
  MemoryState s;
  for (int i = 1; i <= 8; ++i) {
    s.preferences.push_back(make_chunk("c" + std::to_string(i), "genre", "s", 0.1 * i));
  }
  auto before = s;
  EXPECT_TRUE(enforce_capacity(s, cfg).empty());
  EXPECT_EQ(s, before);
}

TEST(Capacity, WeakestNinthEvicted) {
  LifecycleConfig cfg;
  MemoryState s;
  for (int i = 1; i <= 8; ++i) {
    s.preferences.push_back(make_chunk("c" + std::to_string(i), "genre", "s", 0.5, 2));
  }
  s.preferences.push_back(make_chunk("c9", "genre", "weak", 0.1, 1));
  s.preferences.push_back(make_chunk("c10", "mood", "other category", 0.01, 1));
  auto evicted = enforce_capacity(s, cfg);
  ASSERT_EQ(evicted.size(), 1u);
  EXPECT_EQ(evicted[0].chunk_id, "c9");
  EXPECT_EQ(s.preferences.size(), 9u);
  EXPECT_EQ(s.mutation_count, 0);  // not a mutation
}

TEST(Capacity, TieEvictsTheOlderThenHigherId) {
  LifecycleConfig cfg;
  cfg.capacity_per_category = 2;
  MemoryState s;
  s.preferences = {make_chunk("c1", "g", "a", 0.5, 1, 10), make_chunk("c2", "g", "b", -0.5, 1, 3),
                   make_chunk("c3", "g", "c", 0.5, 1, 10)};
  auto evicted = enforce_capacity(s, cfg);
  ASSERT_EQ(evicted.size(), 1u);
  EXPECT_EQ(evicted[0].chunk_id, "c2");

  MemoryState t;
  t.preferences = {make_chunk("c10", "g", "a", 0.5, 1, 4), make_chunk("c2", "g", "b", 0.5, 1, 4),
                   make_chunk("c9", "g", "c", 0.5, 1, 4)};
  evicted = enforce_capacity(t, cfg);
  ASSERT_EQ(evicted.size(), 1u);
  EXPECT_EQ(evicted[0].chunk_id, "c10");  // numeric id order, not lexicographic
}

TEST(Capacity, MatchesBruteForceAndIsIdempotent) {
  LifecycleConfig cfg;
  cfg.capacity_per_category = 3;
  MemoryState s;
  int id = 1;
  for (int cat = 0; cat < 3; ++cat) {
    for (int k = 0; k < 6; ++k, ++id) {
      s.preferences.push_back(make_chunk("c" + std::to_string(id), "cat" + std::to_string(cat),
                                         "s", ((id * 37) % 21 - 10) / 10.0, 1 + id % 3, id % 4));
    }
  }
  // oracle: rank each category by the documented key with a plain comparator
  std::map<std::string, std::vector<PreferenceChunk>> groups;
  for (const auto& c : s.preferences) groups[c.category].push_back(c);
  std::set<std::string> keep;
  for (auto& [_, v] : groups) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      const double sa = a.evidence * std::fabs(a.strength), sb = b.evidence * std::fabs(b.strength);
      if (std::fabs(sa - sb) > 1e-9) return sa > sb;
      if (a.updated_at != b.updated_at) return a.updated_at > b.updated_at;
      return std::stoi(a.chunk_id.substr(1)) < std::stoi(b.chunk_id.substr(1));
    });
    for (std::size_t i = 0; i < std::min<std::size_t>(3, v.size()); ++i) keep.insert(v[i].chunk_id);
  }
  enforce_capacity(s, cfg);
  std::set<std::string> got;
  for (const auto& c : s.preferences) got.insert(c.chunk_id);
  EXPECT_EQ(got, keep);
  auto once = s;
  EXPECT_TRUE(enforce_capacity(s, cfg).empty());
  EXPECT_EQ(s, once);
}

namespace {

struct Harness {
  std::shared_ptr<ScriptedBackend> backend = std::make_shared<ScriptedBackend>();
  Gateway gateway{backend};
  Session session{gateway, "u"};
};

}  // namespace

TEST(Extract, AppliesAtMostFiveAndMarksProcessed) {
  Harness h;
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < 7; ++i) {
    arr.push_back({{"action", "create"}, {"category", "genre"}, {"text", "p" + std::to_string(i)},
                   {"strength", 0.5}});
  }
  h.backend->set_default(PromptTag::extract, arr.dump());
  MemoryState s;
  s.user_id = "u";
  for (int i = 0; i < 3; ++i) append_event(s, make_event("u", "i" + std::to_string(i), i));
  std::vector<EventSignal> events(s.events.begin(), s.events.end());
  auto r = extract(s, events, h.session, LifecycleConfig{}, DomainConfig{});
  EXPECT_EQ(r.applied.size(), 5u);
  EXPECT_EQ(s.preferences.size(), 5u);
  EXPECT_EQ(s.pending_count(), 0u);
  EXPECT_EQ(s.mutation_count, 5);
  EXPECT_EQ(h.session.usage().calls, 1);
}

TEST(Extract, EmptyArrayStillMarksProcessed) {
  Harness h;
  h.backend->set_default(PromptTag::extract, "[]");
  MemoryState s;
  s.user_id = "u";
  for (int i = 0; i < 3; ++i) append_event(s, make_event("u", "i" + std::to_string(i), i));
  std::vector<EventSignal> events(s.events.begin(), s.events.end());
  auto r = extract(s, events, h.session, LifecycleConfig{}, DomainConfig{});
  EXPECT_TRUE(r.applied.empty());
  EXPECT_TRUE(s.preferences.empty());
  EXPECT_EQ(s.pending_count(), 0u);
  EXPECT_EQ(s.mutation_count, 0);
}

TEST(ApplyUpdates, StrengthenResolvesByStatementUnknownCategoryDropped) {
  MemoryState s = one_chunk(0.5);
  std::vector<PreferenceUpdate> ups{
      {UpdateAction::strengthen, "topic", "christianity", 0.0, std::nullopt},
      {UpdateAction::weaken, "", "", 0.0, std::string("c1")},
      {UpdateAction::create, "weather", "rain", 0.3, std::nullopt},
      {UpdateAction::weaken, "", "not there", 0.0, std::nullopt},
  };
  DomainConfig d;
  d.categories = {"topic", "author"};
  auto r = apply_updates(s, ups, LifecycleConfig{}, d);
  EXPECT_EQ(r.applied.size(), 2u);
  EXPECT_EQ(r.warnings.size(), 2u);
  EXPECT_DOUBLE_EQ(s.preferences[0].strength, 0.4);
  EXPECT_EQ(s.preferences[0].evidence, 5);
}

TEST(Synthesize, BumpsVersionKeepsPreviousResetsMutations) {
  Harness h;
  h.backend->set_default(PromptTag::synthesize, "  A reader of Reformed theology.  ");
  auto s = one_chunk(0.8);
  s.profile.text = "old";
  s.profile.version = 2;
  s.mutation_count = 6;
  s.step = 40;
  auto r = synthesize(s, h.session);
  EXPECT_TRUE(r.updated);
  EXPECT_TRUE(r.called_llm);
  EXPECT_EQ(s.profile.text, "A reader of Reformed theology.");
  EXPECT_EQ(s.profile.previous_text, "old");
  EXPECT_EQ(s.profile.version, 3);
  EXPECT_EQ(s.profile.synthesized_at, 40);
  EXPECT_EQ(s.mutation_count, 0);
}

TEST(Synthesize, DeterministicForTheSameScript) {
  Harness a, b;
  a.backend->set_default(PromptTag::synthesize, "Same text.");
  b.backend->set_default(PromptTag::synthesize, "Same text.");
  auto s1 = one_chunk(0.8), s2 = one_chunk(0.8);
  synthesize(s1, a.session);
  synthesize(s2, b.session);
  EXPECT_EQ(s1, s2);
}

TEST(Synthesize, NoChunksGivesPlaceholderWithoutACall) {
  Harness h;
  MemoryState s;
  auto r = synthesize(s, h.session);
  EXPECT_TRUE(r.updated);
  EXPECT_FALSE(r.called_llm);
  EXPECT_EQ(s.profile.text, kEmptyProfileText);
  EXPECT_EQ(s.profile.version, 1);
  EXPECT_EQ(h.session.usage().calls, 0);
}

TEST(Synthesize, EmptyResponseKeepsPreviousProfile) {
  Harness h;
  h.backend->set_default(PromptTag::synthesize, "");
  auto s = one_chunk(0.8);
  s.profile.text = "kept";
  s.profile.version = 4;
  s.mutation_count = 5;
  auto r = synthesize(s, h.session);
  EXPECT_FALSE(r.updated);
  EXPECT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(s.profile.text, "kept");
  EXPECT_EQ(s.profile.version, 4);
  EXPECT_EQ(s.mutation_count, 5);
}

TEST(LifecycleConfig, RejectsOptimisticSteps) {
  LifecycleConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.demote_step = 0.1;
  try {
    cfg.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("demote_step > boost_step"), std::string::npos);
  }
  cfg = LifecycleConfig{};
  cfg.capacity_per_category = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Formatting, PreferenceAndEventLines) {
  EXPECT_EQ(format_preference_line(make_chunk("c3", "topic", "Grace", 0.8, 2)),
            "- [c3] (topic) Grace (strength 0.80, evidence 2)");
  auto e = make_event("u", "b1", 1, "Institutes", "Systematic theology");
  e.metadata["genre"] = "theology";
  EXPECT_EQ(format_event_line(e), "- [view] Institutes: Systematic theology (genre=theology)");
}
