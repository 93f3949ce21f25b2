#include "tiermem/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "tiermem/error.hpp"
#include "tiermem/rng.hpp"

namespace tiermem {

using ordered_json = nlohmann::ordered_json;

double hit_rate_at_k(std::size_t rank, std::size_t k) {
  if (rank < 1) throw Error(ErrorKind::validation, "rank is 1-based");
  return rank <= k ? 1.0 : 0.0;
}

double ndcg_at_k(std::size_t rank, std::size_t k) {
  if (rank < 1) throw Error(ErrorKind::validation, "rank is 1-based");
  if (rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

std::optional<LeaveOneOutSplit> split_leave_one_out(std::span<const InteractionRecord> interactions,
                                                    std::string* reason) {
  if (interactions.size() < 2) {
    if (reason) *reason = "fewer than 2 interactions";
    return std::nullopt;
  }
  auto later = [](const InteractionRecord& a, const InteractionRecord& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.position < b.position;
  };
  std::vector<InteractionRecord> ordered(interactions.begin(), interactions.end());
  std::stable_sort(ordered.begin(), ordered.end(), later);
  LeaveOneOutSplit split;
  split.held_out = ordered.back();
  ordered.pop_back();
  split.history = std::move(ordered);
  return split;
}

std::vector<std::string> sample_negatives(const std::string& user_id,
                                          std::span<const std::string> item_pool,
                                          const std::set<std::string>& interacted,
                                          std::uint64_t seed, std::size_t count) {
  std::vector<std::string> eligible;
  for (const auto& id : item_pool) {
    if (!interacted.count(id)) eligible.push_back(id);
  }
  std::sort(eligible.begin(), eligible.end());
  eligible.erase(std::unique(eligible.begin(), eligible.end()), eligible.end());
  if (eligible.size() < count) {
    throw Error(ErrorKind::data, "user " + user_id + " has only " +
                                     std::to_string(eligible.size()) +
                                     " non-interacted items for negative sampling");
  }
  DeterministicRng rng(derive_seed(seed, user_id, 0));
  return rng.sample(std::move(eligible), count);
}

std::optional<TestInstance> make_test_instance(const Dataset& dataset, const std::string& user_id,
                                               std::uint64_t seed, std::string* reason) {
  const auto& all = dataset.history(user_id);
  auto split = split_leave_one_out(all, reason);
  if (!split) return std::nullopt;

  std::set<std::string> interacted;
  for (const auto& r : all) interacted.insert(r.item_id);
  std::vector<std::string> negatives;
  try {
    negatives = sample_negatives(user_id, dataset.item_pool(), interacted, seed);
  } catch (const Error& e) {
    if (reason) *reason = e.what();
    return std::nullopt;
  }

  TestInstance t;
  t.user_id = user_id;
  t.ground_truth = dataset.candidate(split->held_out.item_id);
  for (const auto& id : negatives) t.negatives.push_back(dataset.candidate(id));
  t.instruction = split->held_out.instruction;
  t.history = std::move(split->history);

  std::vector<Candidate> slate{t.ground_truth};
  slate.insert(slate.end(), t.negatives.begin(), t.negatives.end());
  DeterministicRng rng(derive_seed(seed, user_id, 1));
  t.slate = rng.sample(std::move(slate), kNegativesPerUser + 1);
  return t;
}

// ---- reports ----

bool MetricReport::metrics_consistent() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  return unit(hr_at_1) && unit(hr_at_5) && unit(ndcg_at_5) && unit(ndcg_at_10) &&
         hr_at_1 <= hr_at_5 && ndcg_at_5 <= ndcg_at_10;
}

MetricReport aggregate_report(std::string mode, std::vector<UserResult> users,
                              std::vector<ExcludedUser> excluded, double price_in,
                              double price_out) {
  MetricReport r;
  r.mode = std::move(mode);
  for (const auto& u : users) {
    r.hr_at_1 += hit_rate_at_k(u.rank, 1);
    r.hr_at_5 += hit_rate_at_k(u.rank, 5);
    r.ndcg_at_5 += ndcg_at_k(u.rank, 5);
    r.ndcg_at_10 += ndcg_at_k(u.rank, 10);
    r.usage += u.usage;
    r.tools += u.tools;
  }
  r.users_evaluated = users.size();
  if (!users.empty()) {
    const auto n = static_cast<double>(users.size());
    r.hr_at_1 /= n;
    r.hr_at_5 /= n;
    r.ndcg_at_5 /= n;
    r.ndcg_at_10 /= n;
  }
  r.users = std::move(users);
  r.excluded = std::move(excluded);
  r.estimated_cost_usd = estimate_cost(r.usage, price_in, price_out);
  return r;
}

ordered_json MetricReport::to_json() const {
  ordered_json j;
  j["mode"] = mode;
  j["users_evaluated"] = users_evaluated;
  j["users_excluded"] = excluded.size();
  j["metrics"] = {{"HR@1", hr_at_1}, {"HR@5", hr_at_5}, {"NDCG@5", ndcg_at_5},
                  {"NDCG@10", ndcg_at_10}};
  j["token_usage"] = {{"input_tokens", usage.input_tokens},
                      {"output_tokens", usage.output_tokens},
                      {"calls", usage.calls}};
  j["token_usage"]["per_tag"] = ordered_json::object();
  for (const auto& [tag, t] : usage.per_tag) {
    j["token_usage"]["per_tag"][tag] = {
        {"input_tokens", t.input_tokens}, {"output_tokens", t.output_tokens}, {"calls", t.calls}};
  }
  j["estimated_cost_usd"] = estimated_cost_usd;
  j["tool_usage"] = ordered_json::object();
  for (const auto& [tool, n] : tools.counts) j["tool_usage"][tool] = n;
  j["users"] = ordered_json::array();
  for (const auto& u : users) {
    ordered_json row = {{"user_id", u.user_id},
                        {"rank", u.rank},
                        {"calls", u.usage.calls},
                        {"input_tokens", u.usage.input_tokens},
                        {"output_tokens", u.usage.output_tokens},
                        {"degraded", u.degraded}};
    row["tools"] = ordered_json::object();
    for (const auto& [tool, n] : u.tools.counts) row["tools"][tool] = n;
    j["users"].push_back(std::move(row));
  }
  j["excluded"] = ordered_json::array();
  for (const auto& e : excluded) {
    j["excluded"].push_back({{"user_id", e.user_id}, {"reason", e.reason}});
  }
  return j;
}

std::string MetricReport::to_text() const {
  std::string out;
  char buf[256];
  auto line = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof buf, fmt, args...);
    out += buf;
    out += "\n";
  };
  line("mode: %s", mode.c_str());
  line("users evaluated: %zu  excluded: %zu", users_evaluated, excluded.size());
  out += "\n";
  line("HR@1     %.6f", hr_at_1);
  line("HR@5     %.6f", hr_at_5);
  line("NDCG@5   %.6f", ndcg_at_5);
  line("NDCG@10  %.6f", ndcg_at_10);
  out += "\n";
  line("llm calls: %lld  input tokens: %lld  output tokens: %lld  est. cost: $%.4f",
       static_cast<long long>(usage.calls), static_cast<long long>(usage.input_tokens),
       static_cast<long long>(usage.output_tokens), estimated_cost_usd);
  for (const auto& [tag, t] : usage.per_tag) {
    line("  %-11s calls %-6lld in %-9lld out %lld", tag.c_str(), static_cast<long long>(t.calls),
         static_cast<long long>(t.input_tokens), static_cast<long long>(t.output_tokens));
  }
  out += "\ntool usage:\n";
  const auto total = tools.total();
  for (const auto& [tool, n] : tools.counts) {
    line("  %-11s %6lld  %5.1f%%", tool.c_str(), static_cast<long long>(n),
         total ? 100.0 * static_cast<double>(n) / static_cast<double>(total) : 0.0);
  }
  out += "\nper user:\n";
  line("  %-20s %5s %6s %10s %10s", "user_id", "rank", "calls", "input", "output");
  for (const auto& u : users) {
    line("  %-20s %5zu %6lld %10lld %10lld%s", u.user_id.c_str(), u.rank,
         static_cast<long long>(u.usage.calls), static_cast<long long>(u.usage.input_tokens),
         static_cast<long long>(u.usage.output_tokens), u.degraded ? "  (degraded)" : "");
  }
  if (!excluded.empty()) {
    out += "\nexcluded users:\n";
    for (const auto& e : excluded) out += "  " + e.user_id + ": " + e.reason + "\n";
  }
  return out;
}

void write_report(const MetricReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream txt(out_dir / "report.txt", std::ios::binary | std::ios::trunc);
    if (!txt) throw Error(ErrorKind::io, "cannot write " + (out_dir / "report.txt").string());
    txt << report.to_text();
  }
  std::ofstream js(out_dir / "report.json", std::ios::binary | std::ios::trunc);
  if (!js) throw Error(ErrorKind::io, "cannot write " + (out_dir / "report.json").string());
  js << report.to_json().dump(2) << "\n";
}

std::string safe_file_stem(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

// ---- drivers ----

namespace {

struct UserOutcome {
  std::optional<UserResult> result;
  std::optional<ExcludedUser> excluded;
};

template <typename PerUser>
MetricReport run_pool(const Dataset& dataset, const EvaluationConfig& cfg, std::string mode,
                      PerUser&& per_user) {
  cfg.engine.validate();
  if (cfg.concurrency < 1) throw Error(ErrorKind::config, "concurrency must be >= 1");
  if (cfg.state_dir) std::filesystem::create_directories(*cfg.state_dir);
  if (cfg.round_log_dir) std::filesystem::create_directories(*cfg.round_log_dir);

  const auto ids = dataset.user_ids();
  std::vector<UserOutcome> outcomes(ids.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < ids.size();) {
      const auto& id = ids[i];
      std::string reason;
      auto instance = make_test_instance(dataset, id, cfg.seed, &reason);
      if (!instance) {
        outcomes[i].excluded = ExcludedUser{id, reason};
        continue;
      }
      try {
        outcomes[i].result = per_user(*instance);
      } catch (const Error& e) {
        outcomes[i].excluded =
            ExcludedUser{id, std::string(to_string(e.kind())) + ": " + e.what()};
      } catch (const std::exception& e) {
        outcomes[i].excluded = ExcludedUser{id, e.what()};
      }
    }
  };
  const auto threads = std::min({cfg.concurrency, kMaxConcurrentUsers, std::max<std::size_t>(ids.size(), 1)});
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<UserResult> results;
  std::vector<ExcludedUser> excluded;
  for (auto& o : outcomes) {
    if (o.result) results.push_back(std::move(*o.result));
    if (o.excluded) excluded.push_back(std::move(*o.excluded));
  }
  auto report = aggregate_report(std::move(mode), std::move(results), std::move(excluded),
                                 cfg.price_in, cfg.price_out);
  if (!report.metrics_consistent()) {
    throw Error(ErrorKind::data, "metric report violates HR/NDCG monotonicity");
  }
  return report;
}

UserResult finish_user(const TestInstance& t, const MemoryState& state, Session& session,
                       const EvaluationConfig& cfg, UserResult result) {
  auto ranked = rank_with_tiers(t.slate, state, t.instruction, session, cfg.batch_size, cfg.tiers);
  result.rank = ranked.rank_of(t.ground_truth.item_id);
  result.degraded = ranked.degraded;
  result.warnings.insert(result.warnings.end(), ranked.warnings.begin(), ranked.warnings.end());
  result.usage = session.usage();
  if (cfg.state_dir) save_state(state, *cfg.state_dir / (safe_file_stem(t.user_id) + ".json"));
  return result;
}

}  // namespace

MetricReport run_retrospective(const Dataset& dataset, const EvaluationConfig& cfg,
                               Gateway& gateway) {
  return run_pool(dataset, cfg, "retrospective", [&](const TestInstance& t) {
    Session session(gateway, t.user_id);
    UserResult result;
    result.user_id = t.user_id;
    std::vector<EventSignal> events;
    for (const auto& r : t.history) events.push_back(dataset.to_event(r));
    auto state = build_retrospective(events, cfg.engine, session, &result.tools, &result.warnings);
    return finish_user(t, state, session, cfg, std::move(result));
  });
}

MetricReport run_evolving(const Dataset& dataset, const EvaluationConfig& cfg, Gateway& gateway,
                          ScheduleMode mode) {
  auto engine = cfg.engine;
  engine.scheduler.mode = mode;
  EvaluationConfig local = cfg;
  local.engine = engine;
  const std::string label = std::string("evolving-") + std::string(to_string(mode));
  return run_pool(dataset, local, label, [&](const TestInstance& t) {
    Session session(gateway, t.user_id);
    UserResult result;
    result.user_id = t.user_id;
    MemoryState state;
    state.user_id = t.user_id;
    SchedulerContext ctx;
    std::optional<std::filesystem::path> log_path;
    if (local.round_log_dir) {
      log_path = *local.round_log_dir / (safe_file_stem(t.user_id) + ".rounds.jsonl");
      std::filesystem::remove(*log_path);
    }
    for (const auto& r : t.history) {
      auto record = ingest(state, dataset.to_event(r), local.engine, session, ctx);
      if (record && log_path) append_round_log(*log_path, t.user_id, *record);
    }
    result.tools = ctx.tools;
    result.warnings = ctx.warnings;
    return finish_user(t, state, session, local, std::move(result));
  });
}

}  // namespace tiermem
