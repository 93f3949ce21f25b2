#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiermem/dataset.hpp"
#include "tiermem/gateway.hpp"
#include "tiermem/ranker.hpp"
#include "tiermem/scheduler.hpp"

namespace tiermem {

inline constexpr std::size_t kNegativesPerUser = 9;
inline constexpr std::size_t kMaxConcurrentUsers = 32;

// Single relevant item: HR@k = [rank <= k], NDCG@k = 1/log2(rank + 1) within the cutoff.
double hit_rate_at_k(std::size_t rank, std::size_t k);
double ndcg_at_k(std::size_t rank, std::size_t k);

struct LeaveOneOutSplit {
  std::vector<InteractionRecord> history;
  InteractionRecord held_out;
};

// Holds out the latest interaction (ties: later in file). nullopt with
// `reason` filled when the user has fewer than two interactions.
std::optional<LeaveOneOutSplit> split_leave_one_out(std::span<const InteractionRecord> interactions,
                                                    std::string* reason = nullptr);

// Nine distinct non-interacted items, drawn from the sorted pool with a
// generator keyed by (seed, user_id). Throws Error{data} on a short pool.
std::vector<std::string> sample_negatives(const std::string& user_id,
                                          std::span<const std::string> item_pool,
                                          const std::set<std::string>& interacted,
                                          std::uint64_t seed,
                                          std::size_t count = kNegativesPerUser);

struct TestInstance {
  std::string user_id;
  Candidate ground_truth;
  std::vector<Candidate> negatives;
  std::vector<Candidate> slate;  // ground truth + negatives, shuffled per user
  std::optional<std::string> instruction;
  std::vector<InteractionRecord> history;
};

std::optional<TestInstance> make_test_instance(const Dataset& dataset, const std::string& user_id,
                                               std::uint64_t seed, std::string* reason = nullptr);

struct EvaluationConfig {
  EngineConfig engine;
  std::uint64_t seed = 42;
  std::size_t concurrency = kMaxConcurrentUsers;
  std::size_t batch_size = kDefaultRankBatch;
  TierFlags tiers;
  std::optional<std::filesystem::path> state_dir;
  std::optional<std::filesystem::path> round_log_dir;
  double price_in = 0.30;   // USD per million input tokens
  double price_out = 2.50;  // USD per million output tokens
};

struct UserResult {
  std::string user_id;
  std::size_t rank = 0;
  TokenUsage usage;
  ToolCounts tools;
  bool degraded = false;
  std::vector<std::string> warnings;
};

struct ExcludedUser {
  std::string user_id;
  std::string reason;
};

struct MetricReport {
  std::string mode;
  std::size_t users_evaluated = 0;
  double hr_at_1 = 0.0;
  double hr_at_5 = 0.0;
  double ndcg_at_5 = 0.0;
  double ndcg_at_10 = 0.0;
  std::vector<UserResult> users;
  std::vector<ExcludedUser> excluded;
  TokenUsage usage;
  ToolCounts tools;
  double estimated_cost_usd = 0.0;

  // HR@1 <= HR@5, NDCG@5 <= NDCG@10, everything in [0, 1].
  bool metrics_consistent() const;
  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

MetricReport aggregate_report(std::string mode, std::vector<UserResult> users,
                              std::vector<ExcludedUser> excluded, double price_in,
                              double price_out);

MetricReport run_retrospective(const Dataset& dataset, const EvaluationConfig& cfg,
                               Gateway& gateway);
MetricReport run_evolving(const Dataset& dataset, const EvaluationConfig& cfg, Gateway& gateway,
                          ScheduleMode mode);

// report.txt (human-readable) and report.json (same data, machine-readable).
void write_report(const MetricReport& report, const std::filesystem::path& out_dir);

// File-system-safe form of a user id.
std::string safe_file_stem(std::string_view id);

}  // namespace tiermem
