#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "test_support.hpp"
#include "tiermem/error.hpp"
#include "tiermem/ranker.hpp"

using namespace tiermem;
using tiermem::testing::make_chunk;
using tiermem::testing::make_event;

namespace {

std::vector<Candidate> slate(int n) {
  std::vector<Candidate> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"B" + std::to_string(i), "Book " + std::to_string(i), "about " + std::to_string(i), {}});
  }
  return out;
}

struct Harness {
  std::shared_ptr<ScriptedBackend> backend = std::make_shared<ScriptedBackend>();
  Gateway gateway{backend};
  Session session{gateway, "u"};
};

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

MemoryState sample_memory() {
  MemoryState m;
  m.user_id = "u";
  m.profile.text = "PROFILE-TEXT";
  append_event(m, make_event("u", "x1", 1, "EVENT-TITLE"));
  m.preferences.push_back(make_chunk("c1", "topic", "CHUNK-STATEMENT", 0.8));
  return m;
}

}  // namespace

TEST(Rank, TenCandidatesOneCall) {
  Harness h;
  h.backend->set_default(PromptTag::rank, "B3 | 9 | STRONG | x");
  auto c = slate(10);
  auto r = rank(c, Profile{"p", "", 1, 0}, {}, std::nullopt, h.session);
  EXPECT_EQ(r.calls, 1u);
  EXPECT_EQ(h.session.usage().calls, 1);
  EXPECT_EQ(r.entries.size(), 10u);
  EXPECT_EQ(r.entries[0].item_id, "B3");
  EXPECT_EQ(r.rank_of("B3"), 1u);
  EXPECT_EQ(r.rank_of("nope"), 0u);
}

TEST(Rank, TwentyFiveCandidatesThreeCallsPermutation) {
  Harness h;
  h.backend->set_default(PromptTag::rank, "B24 | 10 | STRONG | x\nB15 | 6 | MAYBE | z\nB0 | 1 | WEAK | y");
  auto c = slate(25);
  auto r = rank(c, Profile{}, {}, std::nullopt, h.session);
  EXPECT_EQ(r.calls, 3u);
  std::multiset<std::string> got, want;
  for (const auto& e : r.entries) got.insert(e.item_id);
  for (const auto& e : c) want.insert(e.item_id);
  EXPECT_EQ(got, want);
  for (std::size_t i = 1; i < r.entries.size(); ++i) {
    EXPECT_GE(r.entries[i - 1].score, r.entries[i].score);
  }
  EXPECT_EQ(r.entries.front().item_id, "B24");
  EXPECT_EQ(r.entries.back().item_id, "B0");
}

TEST(Rank, StableOnEqualScores) {
  Harness h;
  h.backend->set_default(PromptTag::rank, "A | 7 | GOOD | a\nB | 9 | STRONG | b\nC | 7 | GOOD | c");
  std::vector<Candidate> c{{"A", "", "", {}}, {"B", "", "", {}}, {"C", "", "", {}}};
  auto r = rank(c, Profile{}, {}, std::nullopt, h.session);
  std::vector<std::string> order;
  for (const auto& e : r.entries) order.push_back(e.item_id);
  EXPECT_EQ(order, (std::vector<std::string>{"B", "A", "C"}));
}

TEST(Rank, UnparseableBatchDegradesToDefaults) {
  Harness h;
  h.backend->set_default(PromptTag::rank, "I cannot rank these.");
  auto c = slate(3);
  auto r = rank(c, Profile{}, {}, std::nullopt, h.session);
  EXPECT_TRUE(r.degraded);
  EXPECT_EQ(r.calls, 2u);  // one parse retry
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.entries[i].item_id, c[i].item_id);
    EXPECT_DOUBLE_EQ(r.entries[i].score, 5.0);
  }
}

TEST(Rank, RejectsDuplicatesAndEmptySlate) {
  Harness h;
  h.backend->set_default(PromptTag::rank, "A | 1 | WEAK | a");
  std::vector<Candidate> dup{{"A", "", "", {}}, {"A", "", "", {}}};
  EXPECT_THROW(rank(dup, Profile{}, {}, std::nullopt, h.session), Error);
  std::vector<Candidate> none;
  EXPECT_THROW(rank(none, Profile{}, {}, std::nullopt, h.session), Error);
  EXPECT_EQ(h.session.usage().calls, 0);
}

TEST(Rank, InstructionFlagAndSection) {
  Harness h;
  h.backend->set_default(PromptTag::rank, "B0 | 1 | WEAK | a");
  h.backend->set_recording(true);
  auto c = slate(1);
  auto r = rank(c, Profile{}, {}, std::string("Something funny"), h.session);
  EXPECT_TRUE(r.instruction_used);
  ASSERT_EQ(h.backend->recorded().size(), 1u);
  EXPECT_TRUE(contains(h.backend->recorded()[0].user, "Something funny"));
}

TEST(TierFlags, AllEightCombinationsControlSections) {
  const auto m = sample_memory();
  auto c = slate(2);
  for (int mask = 0; mask < 8; ++mask) {
    TierFlags t{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
    auto req = build_rank_prompt(c, m, std::nullopt, t);
    EXPECT_EQ(contains(req.user, "PROFILE-TEXT"), t.use_profile) << t.to_string();
    EXPECT_EQ(contains(req.user, "EVENT-TITLE"), t.use_events) << t.to_string();
    EXPECT_EQ(contains(req.user, "CHUNK-STATEMENT"), t.use_preferences) << t.to_string();
    EXPECT_TRUE(contains(req.user, "B0 | Book 0 | about 0"));
    EXPECT_EQ(TierFlags::parse(t.to_string()), t);
  }
}

TEST(TierFlags, ParseAndDefault) {
  EXPECT_EQ(TierFlags{}, TierFlags::parse("profile,event"));
  EXPECT_EQ(TierFlags{}.to_string(), "profile,event");
  EXPECT_EQ(TierFlags::parse("none").to_string(), "none");
  EXPECT_EQ(TierFlags::parse("preference, profile"), (TierFlags{true, false, true}));
  EXPECT_THROW(TierFlags::parse("profile,vibes"), Error);
}
