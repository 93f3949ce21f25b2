#include "tiermem/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "tiermem/dataset.hpp"
#include "tiermem/evaluation.hpp"
#include "tiermem/lifecycle.hpp"
#include "tiermem/replay.hpp"

namespace tiermem {

using ordered_json = nlohmann::ordered_json;

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return kExitConfig;
    case ErrorKind::transport:
    case ErrorKind::empty_response: return kExitBackend;
    default: return kExitData;
  }
}

namespace {

void write_json(const std::filesystem::path& path, const ordered_json& j) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::io, "cannot write " + path.string());
  f << j.dump(2) << "\n";
}

ordered_json stats_json(const DatasetStats& s, const Dataset& ds) {
  ordered_json j;
  j["users"] = s.users;
  j["items"] = s.items;
  j["interactions"] = s.interactions;
  j["density"] = s.density;
  j["avg_interactions_per_user"] = s.avg_per_user;
  j["catalog_items"] = ds.items().size();
  j["malformed_lines"] = ds.malformed_lines;
  j["unknown_item_refs"] = ds.unknown_item_refs;
  return j;
}

std::string stats_text(const DatasetStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "users %lld  items %lld  interactions %lld  density %.3f%%  avg/user %.1f\n",
                static_cast<long long>(s.users), static_cast<long long>(s.items),
                static_cast<long long>(s.interactions), s.density * 100.0, s.avg_per_user);
  return buf;
}

std::shared_ptr<ChatBackend> make_backend(const RunConfig& cfg) {
  if (cfg.backend == BackendKind::scripted) return ScriptedBackend::from_file(*cfg.fixtures);
  return std::make_shared<RemoteBackend>(RemoteBackend::from_env());
}

}  // namespace

int cmd_run(const RunConfig& input, std::ostream& out, std::ostream& err) {
  RunConfig cfg = input;
  try {
    cfg.validate();
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  std::shared_ptr<ChatBackend> backend;
  try {
    backend = make_backend(cfg);
  } catch (const std::exception& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitBackend;
  }
  Gateway gateway(backend, cfg.retry);

  try {
    auto dataset = load_dataset(cfg.interactions, cfg.items);
    for (const auto& w : dataset.warnings) err << "warning: " << w << "\n";
    if (cfg.subsample) {
      auto ids = subsample_users(dataset, cfg.subsample->min_count, cfg.subsample->max_count,
                                 cfg.subsample->n, cfg.subsample->seed);
      dataset = dataset.restricted_to(ids);
    }

    if (cfg.category_cache) {
      Session cat_session(gateway, "__categories__");
      auto sample = most_interacted_items(dataset, kCategorySampleItems);
      try {
        cfg.eval.engine.domain.categories =
            generate_categories(cfg.eval.engine.domain.name, cfg.eval.engine.domain.item_noun,
                                sample, cat_session, *cfg.category_cache);
      } catch (const Error& e) {
        err << "warning: category generation failed (" << e.what()
            << "); using the configured categories\n";
      }
    }

    std::filesystem::create_directories(cfg.out);
    if (cfg.write_states) cfg.eval.state_dir = cfg.out / "states";
    if (cfg.write_round_logs && cfg.mode != RunMode::retrospective) {
      cfg.eval.round_log_dir = cfg.out / "rounds";
    }
    write_json(cfg.out / "config.json", config_snapshot(cfg));

    const auto stats = compute_stats(dataset);
    write_json(cfg.out / "stats.json", stats_json(stats, dataset));
    out << "dataset: " << stats_text(stats);

    MetricReport report;
    switch (cfg.mode) {
      case RunMode::retrospective: report = run_retrospective(dataset, cfg.eval, gateway); break;
      case RunMode::evolving_fixed:
        report = run_evolving(dataset, cfg.eval, gateway, ScheduleMode::fixed);
        break;
      case RunMode::evolving_agentic:
        report = run_evolving(dataset, cfg.eval, gateway, ScheduleMode::agentic);
        break;
    }
    write_report(report, cfg.out);
    out << report.to_text();

    if (report.users_evaluated == 0) {
      bool backend_failure = false;
      for (const auto& x : report.excluded) {
        if (x.reason.rfind("transport", 0) == 0 || x.reason.rfind("empty_response", 0) == 0) {
          backend_failure = true;
        }
      }
      err << "no users evaluated (" << report.excluded.size() << " excluded)\n";
      return backend_failure ? kExitBackend : kExitData;
    }
    return kExitOk;
  } catch (const Error& e) {
    err << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int cmd_replay(const std::filesystem::path& fixture, std::ostream& out, std::ostream& err,
               const std::optional<std::filesystem::path>& state_out) {
  try {
    auto fx = load_replay_fixture(fixture);
    auto result = run_replay(fx);
    if (state_out) {
      std::ofstream f(*state_out, std::ios::binary | std::ios::trunc);
      if (!f) throw Error(ErrorKind::io, "cannot write " + state_out->string());
      f << result.state_text;
    }
    std::map<std::string, std::size_t> per_category;
    for (const auto& c : result.state.preferences) ++per_category[c.category];
    out << "events " << fx.events.size() << "  rounds " << result.context.rounds
        << "  llm calls " << result.usage.calls << "\n";
    out << "preferences " << result.state.preferences.size() << " across " << per_category.size()
        << " categories; profile version " << result.state.profile.version << "\n";
    const auto total = result.context.tools.total();
    out << "tool usage:";
    for (const auto& [tool, n] : result.context.tools.counts) {
      char buf[96];
      std::snprintf(buf, sizeof buf, " %s %lld (%.0f%%)", tool.c_str(), static_cast<long long>(n),
                    total ? 100.0 * static_cast<double>(n) / static_cast<double>(total) : 0.0);
      out << buf;
    }
    out << "\n";
    if (!fx.expected_state && !fx.expected_tools) {
      out << "no expectation in fixture; nothing to compare\n";
      return kExitOk;
    }
    if (result.passed()) {
      out << "replay: PASS\n";
      return kExitOk;
    }
    out << "replay: FAIL (" << result.diffs.size() << " differences)\n";
    for (const auto& d : result.diffs) out << "  " << d << "\n";
    return kExitData;
  } catch (const Error& e) {
    err << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }
}

std::string inspect_text(const MemoryState& state) {
  std::string out;
  char buf[512];
  out += "user: " + state.user_id + "\n";
  std::snprintf(buf, sizeof buf, "step %lld  pending events %zu/%zu  mutations since synthesis %lld\n",
                static_cast<long long>(state.step), state.pending_count(), state.events.size(),
                static_cast<long long>(state.mutation_count));
  out += buf;
  std::snprintf(buf, sizeof buf, "profile (version %lld):\n",
                static_cast<long long>(state.profile.version));
  out += buf;
  out += state.profile.text.empty() ? "  (none)\n" : "  " + state.profile.text + "\n";

  if (state.preferences.empty()) {
    out += "\n== no preferences ==\n";
    return out;
  }
  std::map<std::string, std::vector<const PreferenceChunk*>> by_cat;
  for (const auto& c : state.preferences) by_cat[c.category].push_back(&c);
  auto stronger = [](const PreferenceChunk* a, const PreferenceChunk* b) {
    const auto sa = capacity_score(*a), sb = capacity_score(*b);
    if (sa != sb) return sa > sb;
    if (a->updated_at != b->updated_at) return a->updated_at > b->updated_at;
    return chunk_id_less(a->chunk_id, b->chunk_id);
  };
  std::vector<std::pair<std::string, std::vector<const PreferenceChunk*>>> cats(by_cat.begin(),
                                                                               by_cat.end());
  for (auto& [name, chunks] : cats) std::stable_sort(chunks.begin(), chunks.end(), stronger);
  // Strongest category first.
  std::stable_sort(cats.begin(), cats.end(), [&](const auto& a, const auto& b) {
    return stronger(a.second.front(), b.second.front());
  });
  for (const auto& [name, chunks] : cats) {
    std::snprintf(buf, sizeof buf, "\n[%s] %zu chunk(s)\n  %-6s %9s %8s %8s  %s\n", name.c_str(),
                  chunks.size(), "id", "strength", "evidence", "score", "statement");
    out += buf;
    for (const auto* c : chunks) {
      std::snprintf(buf, sizeof buf, "  %-6s %9.3f %8lld %8.3f  ", c->chunk_id.c_str(), c->strength,
                    static_cast<long long>(c->evidence),
                    static_cast<double>(capacity_score(*c)) / 1e6);
      out += buf;
      out += c->statement + "\n";
    }
  }
  return out;
}

int cmd_inspect(const std::filesystem::path& state_path, std::ostream& out, std::ostream& err) {
  try {
    out << inspect_text(load_state(state_path));
    return kExitOk;
  } catch (const Error& e) {
    err << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }
}

int cmd_stats(const std::filesystem::path& interactions,
              const std::optional<std::filesystem::path>& items,
              const std::optional<std::filesystem::path>& out_dir, std::ostream& out,
              std::ostream& err) {
  try {
    auto ds = load_dataset(interactions, items);
    for (const auto& w : ds.warnings) err << "warning: " << w << "\n";
    auto stats = compute_stats(ds);
    out << stats_text(stats);
    if (ds.malformed_lines) out << "malformed lines skipped: " << ds.malformed_lines << "\n";
    if (ds.unknown_item_refs) out << "unknown item references: " << ds.unknown_item_refs << "\n";
    if (out_dir) {
      std::filesystem::create_directories(*out_dir);
      write_json(*out_dir / "stats.json", stats_json(stats, ds));
    }
    return kExitOk;
  } catch (const Error& e) {
    err << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }
}

}  // namespace tiermem
