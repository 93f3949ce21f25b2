#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "tiermem/evaluation.hpp"
#include "tiermem/gateway.hpp"
#include "tiermem/scheduler.hpp"

namespace tiermem {

enum class RunMode { retrospective, evolving_fixed, evolving_agentic };

std::string_view to_string(RunMode mode) noexcept;
RunMode run_mode_from_string(std::string_view name);  // Error{config} on unknown

enum class BackendKind { scripted, remote };

std::string_view to_string(BackendKind kind) noexcept;
BackendKind backend_kind_from_string(std::string_view name);

struct SubsampleConfig {
  std::size_t min_count = 50;
  std::size_t max_count = 200;
  std::size_t n = 100;
  std::uint64_t seed = 42;
};

// Everything a run needs. Defaults are the published hyperparameters.
struct RunConfig {
  RunMode mode = RunMode::evolving_agentic;
  std::filesystem::path interactions;
  std::optional<std::filesystem::path> items;
  BackendKind backend = BackendKind::scripted;
  std::optional<std::filesystem::path> fixtures;
  std::filesystem::path out = "out";
  std::optional<SubsampleConfig> subsample;
  std::optional<std::filesystem::path> category_cache;  // enables generated categories
  bool write_states = true;
  bool write_round_logs = true;
  RetryPolicy retry;
  EvaluationConfig eval;

  // Throws Error{config} naming the first offending field.
  void validate() const;
};

// Keys accepted in a config file; one flat JSON object.
std::span<const std::string_view> config_keys();

// Applies one flat JSON object on top of `cfg`. Unknown keys and wrong types
// are config errors naming the key.
void apply_config(RunConfig& cfg, const nlohmann::json& flat);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

// Flat snapshot in the same format; apply_config(RunConfig{}, snapshot) round-trips.
nlohmann::ordered_json config_snapshot(const RunConfig& cfg);

}  // namespace tiermem
