// tiermem: run evaluations, replay fixtures, inspect memory states, print dataset stats.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tiermem/commands.hpp"
#include "tiermem/config.hpp"

int main(int argc, char** argv) {
  using namespace tiermem;
  CLI::App app{"tiermem: three-tier user memory for LLM recommenders"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run an evaluation and write a report");
  std::string config_path, mode, backend, fixtures, out, tiers, interactions, items;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> concurrency;
  run->add_option("--config", config_path, "flat JSON config file");
  run->add_option("--mode", mode, "retrospective | evolving-fixed | evolving-agentic");
  run->add_option("--backend", backend, "scripted | remote");
  run->add_option("--fixtures", fixtures, "scripted response fixture");
  run->add_option("--seed", seed, "negative-sampling seed");
  run->add_option("--out", out, "output directory");
  run->add_option("--tiers", tiers, "memory tiers for ranking, e.g. profile,event");
  run->add_option("--concurrency", concurrency, "users evaluated in parallel (<= 32)");
  run->add_option("--interactions", interactions, "interactions JSONL");
  run->add_option("--items", items, "item metadata JSONL");

  // replay
  auto* replay = app.add_subcommand("replay", "replay a fixture and diff against its expectation");
  std::string replay_fixture, state_out;
  replay->add_option("fixture", replay_fixture, "replay fixture")->required();
  replay->add_option("--state-out", state_out, "write the final state here");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "print a persisted memory state");
  std::string state_path;
  inspect->add_option("state", state_path, "state file")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "dataset statistics");
  std::string st_inter, st_items, st_out;
  stats->add_option("--interactions", st_inter, "interactions JSONL")->required();
  stats->add_option("--items", st_items, "item metadata JSONL");
  stats->add_option("--out", st_out, "directory for stats.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  if (*run) {
    RunConfig cfg;
    nlohmann::json flags = nlohmann::json::object();
    if (!mode.empty()) flags["mode"] = mode;
    if (!backend.empty()) flags["backend"] = backend;
    if (!fixtures.empty()) flags["fixtures"] = fixtures;
    if (seed) flags["seed"] = *seed;
    if (!out.empty()) flags["out"] = out;
    if (!tiers.empty()) flags["tiers"] = tiers;
    if (concurrency) flags["concurrency"] = *concurrency;
    if (!interactions.empty()) flags["interactions"] = interactions;
    if (!items.empty()) flags["items"] = items;
    try {
      if (!config_path.empty()) cfg = load_run_config(config_path);
      apply_config(cfg, flags);
    } catch (const Error& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    }
    return cmd_run(cfg, std::cout, std::cerr);
  }
  if (*replay) {
    std::optional<std::filesystem::path> so;
    if (!state_out.empty()) so = state_out;
    return cmd_replay(replay_fixture, std::cout, std::cerr, so);
  }
  if (*inspect) return cmd_inspect(state_path, std::cout, std::cerr);
  if (*stats) {
    std::optional<std::filesystem::path> it, od;
    if (!st_items.empty()) it = st_items;
    if (!st_out.empty()) od = st_out;
    return cmd_stats(st_inter, it, od, std::cout, std::cerr);
  }
  return kExitConfig;
}
