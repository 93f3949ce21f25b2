#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "tiermem/commands.hpp"
#include "tiermem/config.hpp"
#include "tiermem/dataset.hpp"
#include "tiermem/error.hpp"
#include "tiermem/evaluation.hpp"
#include "tiermem/gateway.hpp"
#include "tiermem/lifecycle.hpp"
#include "tiermem/memory_state.hpp"
#include "tiermem/replay.hpp"

namespace py = pybind11;
using namespace tiermem;

namespace {

// JSON crosses the boundary as text; the Python side uses the json module.
nlohmann::json parse_json_text(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, std::string("invalid JSON: ") + e.what());
  }
}

py::tuple run_command(const std::function<int(std::ostream&, std::ostream&)>& fn) {
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = fn(out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_tiermem, m) {
  m.doc() = "Tiered preference memory: lifecycle operators, metrics and drivers";

  static py::exception<Error> error_type(m, "TiermemError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(to_string(e.kind())) + ": " + e.what();
      PyErr_SetString(error_type.ptr(), msg.c_str());
    }
  });

  py::class_<PreferenceChunk>(m, "PreferenceChunk")
      .def_readonly("chunk_id", &PreferenceChunk::chunk_id)
      .def_readonly("category", &PreferenceChunk::category)
      .def_readonly("statement", &PreferenceChunk::statement)
      .def_readonly("strength", &PreferenceChunk::strength)
      .def_readonly("evidence", &PreferenceChunk::evidence)
      .def_readonly("created_at", &PreferenceChunk::created_at)
      .def_readonly("updated_at", &PreferenceChunk::updated_at)
      .def("__repr__", [](const PreferenceChunk& c) { return format_preference_line(c); });

  py::class_<Profile>(m, "Profile")
      .def_readonly("text", &Profile::text)
      .def_readonly("previous_text", &Profile::previous_text)
      .def_readonly("version", &Profile::version);

  py::class_<MemoryState>(m, "MemoryState")
      .def(py::init<>())
      .def_readwrite("user_id", &MemoryState::user_id)
      .def_readonly("preferences", &MemoryState::preferences)
      .def_readonly("profile", &MemoryState::profile)
      .def_readonly("mutation_count", &MemoryState::mutation_count)
      .def_property_readonly("event_count", [](const MemoryState& s) { return s.events.size(); })
      .def_property_readonly("pending_count", &MemoryState::pending_count)
      .def("chunk", [](const MemoryState& s, const std::string& id) {
        const auto* c = s.find_chunk(id);
        if (!c) throw Error(ErrorKind::not_found, "no chunk " + id);
        return *c;
      })
      .def("to_json", [](const MemoryState& s) { return to_json_text(s); })
      .def_static("from_json", &from_json_text)
      .def_static("load", [](const std::filesystem::path& p) { return load_state(p); })
      .def("save", [](const MemoryState& s, const std::filesystem::path& p) { save_state(s, p); })
      .def("inspect", [](const MemoryState& s) { return inspect_text(s); })
      .def("__eq__", [](const MemoryState& a, const MemoryState& b) { return a == b; });

  py::class_<LifecycleConfig>(m, "LifecycleConfig")
      .def(py::init<>())
      .def_readwrite("boost_step", &LifecycleConfig::boost_step)
      .def_readwrite("demote_step", &LifecycleConfig::demote_step)
      .def_readwrite("forget_strength_threshold", &LifecycleConfig::forget_strength_threshold)
      .def_readwrite("forget_evidence_threshold", &LifecycleConfig::forget_evidence_threshold)
      .def_readwrite("synthesis_trigger", &LifecycleConfig::synthesis_trigger)
      .def_readwrite("capacity_per_category", &LifecycleConfig::capacity_per_category)
      .def_property(
          "forget_guard", [](const LifecycleConfig& c) { return std::string(to_string(c.forget_guard)); },
          [](LifecycleConfig& c, const std::string& v) { c.forget_guard = forget_guard_from_string(v); })
      .def("validate", &LifecycleConfig::validate);

  m.def("normalize_strength", &normalize_strength);
  m.def("capacity_score", &capacity_score);
  m.def("boost", [](MemoryState& s, const std::string& id, const LifecycleConfig& c) { boost(s, id, c); },
        py::arg("state"), py::arg("chunk_id"), py::arg("config") = LifecycleConfig{});
  m.def("demote", [](MemoryState& s, const std::string& id, const LifecycleConfig& c) { demote(s, id, c); },
        py::arg("state"), py::arg("chunk_id"), py::arg("config") = LifecycleConfig{});
  m.def(
      "merge",
      [](MemoryState& s, const std::vector<std::string>& ids, const std::string& statement,
         const LifecycleConfig& c) { return merge(s, ids, statement, c); },
      py::arg("state"), py::arg("source_ids"), py::arg("statement"), py::arg("config") = LifecycleConfig{});
  m.def(
      "forget",
      [](MemoryState& s, const std::string& id, const LifecycleConfig& c) {
        return forget(s, id, c) == ForgetOutcome::deleted;
      },
      py::arg("state"), py::arg("chunk_id"), py::arg("config") = LifecycleConfig{},
      "True when deleted, False when the guard refused.");
  m.def(
      "enforce_capacity",
      [](MemoryState& s, const LifecycleConfig& c) { return enforce_capacity(s, c); },
      py::arg("state"), py::arg("config") = LifecycleConfig{});

  m.def("hit_rate_at_k", &hit_rate_at_k, py::arg("rank"), py::arg("k"));
  m.def("ndcg_at_k", &ndcg_at_k, py::arg("rank"), py::arg("k"));
  m.def("estimate_cost",
        py::overload_cast<std::int64_t, std::int64_t, double, double>(&estimate_cost),
        py::arg("input_tokens"), py::arg("output_tokens"), py::arg("price_in") = 0.30,
        py::arg("price_out") = 2.50);
  m.def(
      "compute_stats",
      [](std::int64_t users, std::int64_t items, std::int64_t interactions) {
        auto s = compute_stats(users, items, interactions);
        py::dict d;
        d["users"] = s.users;
        d["items"] = s.items;
        d["interactions"] = s.interactions;
        d["density"] = s.density;
        d["avg_per_user"] = s.avg_per_user;
        return d;
      },
      py::arg("users"), py::arg("items"), py::arg("interactions"));

  m.def(
      "replay",
      [](const std::filesystem::path& fixture) {
        ReplayResult r;
        {
          py::gil_scoped_release release;
          r = run_replay(load_replay_fixture(fixture));
        }
        py::dict d;
        d["passed"] = r.passed();
        d["diffs"] = r.diffs;
        d["state"] = r.state;
        d["state_json"] = r.state_text;
        d["calls"] = r.usage.calls;
        return d;
      },
      py::arg("fixture"));

  // Command wrappers return (exit_code, stdout, stderr).
  m.def(
      "run",
      [](const std::string& config_json) -> py::tuple {
        RunConfig cfg;
        try {
          apply_config(cfg, parse_json_text(config_json));
        } catch (const Error& e) {
          return py::make_tuple(kExitConfig, std::string(), std::string("config error: ") + e.what() + "\n");
        }
        return run_command([&](std::ostream& o, std::ostream& e) { return cmd_run(cfg, o, e); });
      },
      py::arg("config_json"));
  m.def(
      "stats",
      [](const std::filesystem::path& interactions) {
        return run_command([&](std::ostream& o, std::ostream& e) {
          return cmd_stats(interactions, std::nullopt, std::nullopt, o, e);
        });
      },
      py::arg("interactions"));
}
