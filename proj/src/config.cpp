#include "tiermem/config.hpp"

#include <array>
#include <fstream>
#include <functional>
#include <map>

#include "tiermem/error.hpp"

namespace tiermem {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(RunMode mode) noexcept {
  switch (mode) {
    case RunMode::retrospective: return "retrospective";
    case RunMode::evolving_fixed: return "evolving-fixed";
    case RunMode::evolving_agentic: return "evolving-agentic";
  }
  return "?";
}

RunMode run_mode_from_string(std::string_view name) {
  if (name == "retrospective") return RunMode::retrospective;
  if (name == "evolving-fixed") return RunMode::evolving_fixed;
  if (name == "evolving-agentic") return RunMode::evolving_agentic;
  throw Error(ErrorKind::config, "mode: expected retrospective, evolving-fixed or evolving-agentic, got '" +
                                     std::string(name) + "'");
}

std::string_view to_string(BackendKind kind) noexcept {
  return kind == BackendKind::scripted ? "scripted" : "remote";
}

BackendKind backend_kind_from_string(std::string_view name) {
  if (name == "scripted") return BackendKind::scripted;
  if (name == "remote") return BackendKind::remote;
  throw Error(ErrorKind::config,
              "backend: expected scripted or remote, got '" + std::string(name) + "'");
}

namespace {

constexpr std::array<std::string_view, 35> kKeys = {
    "mode",           "interactions",      "items",
    "backend",        "fixtures",          "out",
    "seed",           "concurrency",       "batch_size",
    "tiers",          "price_in",          "price_out",
    "event_window",   "boost_step",        "demote_step",
    "forget_strength_threshold",           "forget_evidence_threshold",
    "synthesis_trigger",                   "capacity_per_category",
    "forget_guard",   "check_interval",    "max_actions_per_round",
    "extraction_window",                   "domain",
    "item_noun",      "categories",        "category_cache",
    "subsample_min",  "subsample_max",     "subsample_n",
    "subsample_seed", "write_states",      "write_round_logs",
    "transport_retries",                   "parse_retries",
};

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(ErrorKind::config, key + ": " + what);
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) bad(key, "expected a string");
  return v.get<std::string>();
}

std::optional<std::filesystem::path> as_opt_path(const std::string& key, const json& v) {
  if (v.is_null()) return std::nullopt;
  auto s = as_string(key, v);
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

std::uint64_t as_uint(const std::string& key, const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    const auto i = v.get<std::int64_t>();
    if (i < 0) bad(key, "must not be negative");
    return static_cast<std::uint64_t>(i);
  }
  bad(key, "expected a non-negative integer");
}

std::int64_t as_int(const std::string& key, const json& v) {
  if (!v.is_number_integer()) bad(key, "expected an integer");
  return v.get<std::int64_t>();
}

double as_double(const std::string& key, const json& v) {
  if (!v.is_number()) bad(key, "expected a number");
  return v.get<double>();
}

bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) bad(key, "expected true or false");
  return v.get<bool>();
}

SubsampleConfig& subsample(RunConfig& cfg) {
  if (!cfg.subsample) cfg.subsample.emplace();
  return *cfg.subsample;
}

using Setter = std::function<void(RunConfig&, const std::string&, const json&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"mode", [](RunConfig& c, const std::string& k, const json& v) {
         c.mode = run_mode_from_string(as_string(k, v));
       }},
      {"interactions", [](RunConfig& c, const std::string& k, const json& v) {
         c.interactions = as_string(k, v);
       }},
      {"items", [](RunConfig& c, const std::string& k, const json& v) { c.items = as_opt_path(k, v); }},
      {"backend", [](RunConfig& c, const std::string& k, const json& v) {
         c.backend = backend_kind_from_string(as_string(k, v));
       }},
      {"fixtures", [](RunConfig& c, const std::string& k, const json& v) {
         c.fixtures = as_opt_path(k, v);
       }},
      {"out", [](RunConfig& c, const std::string& k, const json& v) { c.out = as_string(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k, const json& v) { c.eval.seed = as_uint(k, v); }},
      {"concurrency", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.concurrency = as_uint(k, v);
       }},
      {"batch_size", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.batch_size = as_uint(k, v);
       }},
      {"tiers", [](RunConfig& c, const std::string& k, const json& v) {
         try {
           c.eval.tiers = TierFlags::parse(as_string(k, v));
         } catch (const Error& e) {
           bad(k, e.what());
         }
       }},
      {"price_in", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.price_in = as_double(k, v);
       }},
      {"price_out", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.price_out = as_double(k, v);
       }},
      {"event_window", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.event_window = as_uint(k, v);
       }},
      {"boost_step", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.lifecycle.boost_step = as_double(k, v);
       }},
      {"demote_step", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.lifecycle.demote_step = as_double(k, v);
       }},
      {"forget_strength_threshold", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.lifecycle.forget_strength_threshold = as_double(k, v);
       }},
      {"forget_evidence_threshold", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.lifecycle.forget_evidence_threshold = as_int(k, v);
       }},
      {"synthesis_trigger", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.lifecycle.synthesis_trigger = as_int(k, v);
       }},
      {"capacity_per_category", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.lifecycle.capacity_per_category = as_uint(k, v);
       }},
      {"forget_guard", [](RunConfig& c, const std::string& k, const json& v) {
         try {
           c.eval.engine.lifecycle.forget_guard = forget_guard_from_string(as_string(k, v));
         } catch (const Error& e) {
           bad(k, e.what());
         }
       }},
      {"check_interval", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.scheduler.check_interval = as_uint(k, v);
       }},
      {"max_actions_per_round", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.scheduler.max_actions_per_round = as_uint(k, v);
       }},
      {"extraction_window", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.scheduler.extraction_window = as_uint(k, v);
       }},
      {"domain", [](RunConfig& c, const std::string& k, const json& v) {
         auto name = as_string(k, v);
         c.eval.engine.domain.name = name;
         // A known domain brings its published categories along.
         if (auto cats = default_categories(name)) c.eval.engine.domain.categories = *cats;
       }},
      {"item_noun", [](RunConfig& c, const std::string& k, const json& v) {
         c.eval.engine.domain.item_noun = as_string(k, v);
       }},
      {"categories", [](RunConfig& c, const std::string& k, const json& v) {
         if (!v.is_array()) bad(k, "expected an array of strings");
         std::vector<std::string> cats;
         for (const auto& e : v) cats.push_back(as_string(k, e));
         c.eval.engine.domain.categories = std::move(cats);
       }},
      {"category_cache", [](RunConfig& c, const std::string& k, const json& v) {
         c.category_cache = as_opt_path(k, v);
       }},
      {"subsample_min", [](RunConfig& c, const std::string& k, const json& v) {
         subsample(c).min_count = as_uint(k, v);
       }},
      {"subsample_max", [](RunConfig& c, const std::string& k, const json& v) {
         subsample(c).max_count = as_uint(k, v);
       }},
      {"subsample_n", [](RunConfig& c, const std::string& k, const json& v) {
         subsample(c).n = as_uint(k, v);
       }},
      {"subsample_seed", [](RunConfig& c, const std::string& k, const json& v) {
         subsample(c).seed = as_uint(k, v);
       }},
      {"write_states", [](RunConfig& c, const std::string& k, const json& v) {
         c.write_states = as_bool(k, v);
       }},
      {"write_round_logs", [](RunConfig& c, const std::string& k, const json& v) {
         c.write_round_logs = as_bool(k, v);
       }},
      {"transport_retries", [](RunConfig& c, const std::string& k, const json& v) {
         c.retry.transport_retries = static_cast<int>(as_uint(k, v));
       }},
      {"parse_retries", [](RunConfig& c, const std::string& k, const json& v) {
         c.retry.parse_retries = static_cast<int>(as_uint(k, v));
       }},
  };
  return table;
}

}  // namespace

std::span<const std::string_view> config_keys() { return kKeys; }

void apply_config(RunConfig& cfg, const json& flat) {
  if (!flat.is_object()) throw Error(ErrorKind::config, "config must be a flat JSON object");
  const auto& table = setters();
  auto apply_one = [&](const std::string& key, const json& value) {
    auto it = table.find(key);
    if (it == table.end()) bad(key, "unknown config field");
    if (value.is_object()) bad(key, "nested objects are not allowed");
    it->second(cfg, key, value);
  };
  // domain first: it resets categories, which an explicit list then overrides
  if (flat.contains("domain")) apply_one("domain", flat["domain"]);
  for (const auto& [key, value] : flat.items()) {
    if (key != "domain") apply_one(key, value);
  }
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open config file " + path.string());
  json flat;
  try {
    flat = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "config file " + path.string() + ": " + e.what());
  }
  apply_config(base, flat);
  return base;
}

void RunConfig::validate() const {
  if (interactions.empty()) bad("interactions", "path is required");
  if (backend == BackendKind::scripted && !fixtures) {
    bad("fixtures", "the scripted backend needs a fixture file");
  }
  if (eval.concurrency < 1 || eval.concurrency > kMaxConcurrentUsers) {
    bad("concurrency", "must be in [1, " + std::to_string(kMaxConcurrentUsers) + "]");
  }
  if (eval.batch_size < 1) bad("batch_size", "must be >= 1");
  if (eval.price_in < 0) bad("price_in", "must be >= 0");
  if (eval.price_out < 0) bad("price_out", "must be >= 0");
  if (subsample) {
    if (subsample->min_count > subsample->max_count) {
      bad("subsample_min", "must not exceed subsample_max");
    }
    if (subsample->n < 1) bad("subsample_n", "must be >= 1");
  }
  eval.engine.validate();
}

ordered_json config_snapshot(const RunConfig& cfg) {
  auto opt_path = [](const std::optional<std::filesystem::path>& p) -> ordered_json {
    return p ? ordered_json(p->generic_string()) : ordered_json(nullptr);
  };
  const auto& e = cfg.eval.engine;
  ordered_json j;
  j["mode"] = to_string(cfg.mode);
  j["interactions"] = cfg.interactions.generic_string();
  j["items"] = opt_path(cfg.items);
  j["backend"] = to_string(cfg.backend);
  j["fixtures"] = opt_path(cfg.fixtures);
  j["out"] = cfg.out.generic_string();
  j["seed"] = cfg.eval.seed;
  j["concurrency"] = cfg.eval.concurrency;
  j["batch_size"] = cfg.eval.batch_size;
  j["tiers"] = cfg.eval.tiers.to_string();
  j["price_in"] = cfg.eval.price_in;
  j["price_out"] = cfg.eval.price_out;
  j["event_window"] = e.event_window;
  j["boost_step"] = e.lifecycle.boost_step;
  j["demote_step"] = e.lifecycle.demote_step;
  j["forget_strength_threshold"] = e.lifecycle.forget_strength_threshold;
  j["forget_evidence_threshold"] = e.lifecycle.forget_evidence_threshold;
  j["synthesis_trigger"] = e.lifecycle.synthesis_trigger;
  j["capacity_per_category"] = e.lifecycle.capacity_per_category;
  j["forget_guard"] = to_string(e.lifecycle.forget_guard);
  j["check_interval"] = e.scheduler.check_interval;
  j["max_actions_per_round"] = e.scheduler.max_actions_per_round;
  j["extraction_window"] = e.scheduler.extraction_window;
  j["domain"] = e.domain.name;
  j["item_noun"] = e.domain.item_noun;
  j["categories"] = e.domain.categories;
  j["category_cache"] = opt_path(cfg.category_cache);
  if (cfg.subsample) {
    j["subsample_min"] = cfg.subsample->min_count;
    j["subsample_max"] = cfg.subsample->max_count;
    j["subsample_n"] = cfg.subsample->n;
    j["subsample_seed"] = cfg.subsample->seed;
  }
  j["write_states"] = cfg.write_states;
  j["write_round_logs"] = cfg.write_round_logs;
  j["transport_retries"] = cfg.retry.transport_retries;
  j["parse_retries"] = cfg.retry.parse_retries;
  return j;
}

}  // namespace tiermem
