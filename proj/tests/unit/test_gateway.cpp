#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "tiermem/error.hpp"
#include "tiermem/gateway.hpp"
#include "tiermem/parsing.hpp"

using namespace tiermem;
using json = nlohmann::json;

namespace {

ChatRequest req(PromptTag tag, std::string user = "hello world") {
  ChatRequest r;
  r.tag = tag;
  r.system = "sys";
  r.user = std::move(user);
  return r;
}

std::string send_as(ScriptedBackend& b, const std::string& scope, PromptTag tag) {
  auto r = req(tag);
  r.scope = scope;
  return b.send(r).text;
}

}  // namespace

TEST(Cost, SpecExamples) {
  EXPECT_DOUBLE_EQ(estimate_cost(0, 0, 0.30, 2.50), 0.0);
  EXPECT_NEAR(estimate_cost(1'000'000, 0, 0.30, 2.50), 0.30, 1e-12);
  EXPECT_NEAR(estimate_cost(22'500'000, 6'000'000, 0.30, 2.50), 21.75, 1e-9);
  // brute check of linearity
  for (std::int64_t in : {0LL, 7LL, 123456LL}) {
    for (std::int64_t out : {0LL, 3LL, 999999LL}) {
      EXPECT_NEAR(estimate_cost(in, out, 0.30, 2.50), in * 0.30 / 1e6 + out * 2.50 / 1e6, 1e-12);
    }
  }
  EXPECT_THROW(estimate_cost(1, 1, -0.1, 1.0), Error);
}

TEST(Tokens, WordCount) {
  EXPECT_EQ(count_words(""), 0);
  EXPECT_EQ(count_words("  \n\t "), 0);
  EXPECT_EQ(count_words("one"), 1);
  EXPECT_EQ(count_words(" a  b\nc\td "), 4);
}

TEST(Tokens, UsageAddsUpAcrossTags) {
  TokenUsage u;
  u.record(PromptTag::extract, 10, 2);
  u.record(PromptTag::rank, 5, 1);
  u.record(PromptTag::rank, 5, 1);
  EXPECT_EQ(u.input_tokens, 20);
  EXPECT_EQ(u.output_tokens, 4);
  EXPECT_EQ(u.calls, 3);
  EXPECT_EQ(u.per_tag["rank"].calls, 2);
  EXPECT_TRUE(u.consistent());
}

TEST(ScriptedBackend, LookupPrecedence) {
  ScriptedBackend b;
  b.add({"*", PromptTag::plan, std::nullopt, "global default", false});
  b.add({"alice", PromptTag::plan, std::nullopt, "alice default", false});
  b.add({"*", PromptTag::plan, 2, "global seq 2", false});
  b.add({"alice", PromptTag::plan, 2, "alice seq 2", false});
  b.add({"*", PromptTag::plan, 3, "global seq 3", false});

  EXPECT_EQ(send_as(b, "alice", PromptTag::plan), "alice default");  // seq 1
  EXPECT_EQ(send_as(b, "alice", PromptTag::plan), "alice seq 2");
  EXPECT_EQ(send_as(b, "alice", PromptTag::plan), "global seq 3");
  EXPECT_EQ(send_as(b, "bob", PromptTag::plan), "global default");
  EXPECT_EQ(send_as(b, "bob", PromptTag::plan), "global seq 2");
  EXPECT_EQ(b.calls("alice", PromptTag::plan), 3);
  EXPECT_EQ(b.calls("bob", PromptTag::plan), 2);
  EXPECT_THROW(send_as(b, "bob", PromptTag::rank), Error);
}

TEST(ScriptedBackend, FromJsonVerbatimAndDeterministic) {
  auto b = ScriptedBackend::from_json(json::parse(R"({
    "defaults": {"synthesize": "same every time"},
    "responses": [
      {"tag": "plan", "seq": 1, "response": "{\"actions\": []}"},
      {"tag": "extract", "response": [{"category": "genre"}]},
      {"tag": "rank", "user": "u", "seq": 1, "error": "timeout"}
    ]})"));
  EXPECT_EQ(send_as(*b, "u", PromptTag::plan), R"({"actions": []})");
  EXPECT_EQ(json::parse(send_as(*b, "u", PromptTag::extract)), json::parse(R"([{"category":"genre"}])"));
  EXPECT_EQ(send_as(*b, "u", PromptTag::synthesize), send_as(*b, "u", PromptTag::synthesize));
  try {
    send_as(*b, "u", PromptTag::rank);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::transport);
  }
  EXPECT_THROW(ScriptedBackend::from_json(json::parse(R"({"responses":[{"tag":"nope","response":"x"}]})")),
               Error);
}

TEST(Gateway, MetersWordCountsWhenBackendReportsNothing) {
  auto b = std::make_shared<ScriptedBackend>();
  b->set_default(PromptTag::extract, "three word reply");
  Gateway g(b);
  Session s(g, "u");
  auto c = s.complete(req(PromptTag::extract, "four words right here"));
  EXPECT_EQ(c.text, "three word reply");
  EXPECT_EQ(c.usage.input_tokens, 1 + 4);  // "sys" + user text
  EXPECT_EQ(c.usage.output_tokens, 3);
  EXPECT_EQ(s.usage(), c.usage);
  EXPECT_EQ(g.usage(), c.usage);
}

TEST(Gateway, SessionStampsScopeAndZeroTemperature) {
  auto b = std::make_shared<ScriptedBackend>();
  b->set_default(PromptTag::plan, "ok");
  b->set_recording(true);
  Gateway g(b);
  Session s(g, "carol");
  auto r = req(PromptTag::plan);
  r.temperature = 0.9;
  s.complete(r);
  ASSERT_EQ(b->recorded().size(), 1u);
  EXPECT_EQ(b->recorded()[0].scope, "carol");
  EXPECT_EQ(b->recorded()[0].temperature, 0.0);
}

TEST(Gateway, EmptyResponseIsMeteredThenRaised) {
  auto b = std::make_shared<ScriptedBackend>();
  b->set_default(PromptTag::synthesize, "   ");
  Gateway g(b);
  Session s(g, "u");
  try {
    s.complete(req(PromptTag::synthesize));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_response);
  }
  EXPECT_EQ(s.usage().calls, 1);
}

TEST(Gateway, TransportRetryThenFailure) {
  auto b = std::make_shared<ScriptedBackend>();
  b->add({"*", PromptTag::rank, 1, "", true});
  b->add({"*", PromptTag::rank, 2, "recovered", false});
  b->add({"*", PromptTag::plan, 1, "", true});
  b->add({"*", PromptTag::plan, 2, "", true});
  Gateway g(b, RetryPolicy{1, 1});
  Session s(g, "u");
  EXPECT_EQ(s.complete(req(PromptTag::rank)).text, "recovered");
  try {
    s.complete(req(PromptTag::plan));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::transport);
  }
}

TEST(Gateway, ParseRetryResendsIdenticalRequest) {
  auto b = std::make_shared<ScriptedBackend>();
  b->add({"*", PromptTag::plan, 1, "not json at all", false});
  b->add({"*", PromptTag::plan, 2, R"({"actions": []})", false});
  b->add({"*", PromptTag::extract, std::nullopt, "still not json", false});
  b->set_recording(true);
  Gateway g(b);
  Session s(g, "u");
  std::vector<std::string> warnings;
  auto plan = complete_parsed(s, req(PromptTag::plan), parse_plan, &warnings);
  ASSERT_TRUE(plan);
  EXPECT_TRUE(plan->actions.empty());
  EXPECT_EQ(b->recorded().size(), 2u);
  EXPECT_EQ(b->recorded()[0].user, b->recorded()[1].user);

  auto ex = complete_parsed(s, req(PromptTag::extract), parse_extraction, &warnings);
  EXPECT_FALSE(ex);
  EXPECT_EQ(s.usage().calls, 4);
}

namespace {

struct LocalServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;
  explicit LocalServer(std::function<void(httplib::Server&)> setup) {
    setup(server);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions"; }
};

}  // namespace

TEST(RemoteBackend, ParsesChatCompletionPayload) {
  std::string seen_body, seen_auth;
  LocalServer srv([&](httplib::Server& s) {
    s.Post("/v1/chat/completions", [&](const httplib::Request& rq, httplib::Response& rs) {
      seen_body = rq.body;
      seen_auth = rq.get_header_value("Authorization");
      rs.set_content(
          R"({"choices":[{"message":{"role":"assistant","content":"B01 | 9 | STRONG | fits"}}],)"
          R"("usage":{"prompt_tokens":120,"completion_tokens":7}})",
          "application/json");
    });
  });
  auto backend = std::make_shared<RemoteBackend>(
      RemoteBackend::Settings{srv.url(), "test-model", "k3y", std::chrono::milliseconds(5000)});
  Gateway g(backend);
  Session s(g, "u");
  auto c = s.complete(req(PromptTag::rank, "rank these"));
  EXPECT_EQ(c.text, "B01 | 9 | STRONG | fits");
  EXPECT_EQ(c.usage.input_tokens, 120);
  EXPECT_EQ(c.usage.output_tokens, 7);
  auto body = json::parse(seen_body);
  EXPECT_EQ(body["model"], "test-model");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "rank these");
  EXPECT_EQ(seen_auth, "Bearer k3y");
}

TEST(RemoteBackend, TimeoutTwiceIsATransportError) {
  std::atomic<int> hits{0};
  LocalServer srv([&](httplib::Server& s) {
    s.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& rs) {
      ++hits;
      std::this_thread::sleep_for(std::chrono::milliseconds(600));
      rs.set_content(R"({"choices":[{"message":{"content":"late"}}]})", "application/json");
    });
  });
  auto backend = std::make_shared<RemoteBackend>(
      RemoteBackend::Settings{srv.url(), "m", "", std::chrono::milliseconds(150)});
  Gateway g(backend, RetryPolicy{1, 0});
  Session s(g, "u");
  try {
    s.complete(req(PromptTag::rank));
    FAIL() << "expected a transport error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::transport);
  }
  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(s.usage().calls, 0);
}

TEST(RemoteBackend, HttpErrorAndMalformedPayload) {
  LocalServer srv([&](httplib::Server& s) {
    s.Post("/v1/chat/completions", [](const httplib::Request& rq, httplib::Response& rs) {
      if (rq.body.find("boom") != std::string::npos) {
        rs.status = 500;
      } else {
        rs.set_content(R"({"nothing": true})", "application/json");
      }
    });
  });
  RemoteBackend b({srv.url(), "m", "", std::chrono::milliseconds(2000)});
  EXPECT_THROW(b.send(req(PromptTag::rank, "boom")), Error);
  EXPECT_THROW(b.send(req(PromptTag::rank, "fine")), Error);
}

TEST(RemoteBackend, EnvironmentIsRequired) {
  ::unsetenv("TIERMEM_LLM_ENDPOINT");
  ::unsetenv("TIERMEM_LLM_MODEL");
  try {
    RemoteBackend::from_env();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}
