#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "tiermem/config.hpp"
#include "tiermem/error.hpp"
#include "tiermem/memory_state.hpp"

namespace tiermem {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitBackend = 3;

int exit_code_for(ErrorKind kind) noexcept;

// Runs the configured evaluation and writes report.txt, report.json,
// config.json and stats.json into cfg.out.
int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Replays a fixture; `state_out` optionally receives the final persisted state.
int cmd_replay(const std::filesystem::path& fixture, std::ostream& out, std::ostream& err,
               const std::optional<std::filesystem::path>& state_out = std::nullopt);

int cmd_inspect(const std::filesystem::path& state_path, std::ostream& out, std::ostream& err);

int cmd_stats(const std::filesystem::path& interactions,
              const std::optional<std::filesystem::path>& items,
              const std::optional<std::filesystem::path>& out_dir, std::ostream& out,
              std::ostream& err);

// Profile, per-category chunk tables (highest evidence * |strength| first),
// pending count and mutation counter.
std::string inspect_text(const MemoryState& state);

}  // namespace tiermem
