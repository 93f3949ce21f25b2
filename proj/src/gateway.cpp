#include "tiermem/gateway.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

namespace tiermem {

using json = nlohmann::json;

std::string_view to_string(PromptTag tag) noexcept {
  switch (tag) {
    case PromptTag::extract: return "extract";
    case PromptTag::synthesize: return "synthesize";
    case PromptTag::plan: return "plan";
    case PromptTag::rank: return "rank";
    case PromptTag::categorize: return "categorize";
  }
  return "unknown";
}

PromptTag prompt_tag_from_string(std::string_view name) {
  for (auto tag : {PromptTag::extract, PromptTag::synthesize, PromptTag::plan, PromptTag::rank,
                   PromptTag::categorize}) {
    if (to_string(tag) == name) return tag;
  }
  throw Error(ErrorKind::validation, "unknown prompt tag '" + std::string(name) + "'");
}

// ---- token accounting ----

void TokenUsage::record(PromptTag tag, std::int64_t input, std::int64_t output) {
  input_tokens += input;
  output_tokens += output;
  calls += 1;
  auto& t = per_tag[std::string(to_string(tag))];
  t.input_tokens += input;
  t.output_tokens += output;
  t.calls += 1;
}

TokenUsage& TokenUsage::operator+=(const TokenUsage& other) {
  input_tokens += other.input_tokens;
  output_tokens += other.output_tokens;
  calls += other.calls;
  for (const auto& [tag, u] : other.per_tag) {
    auto& t = per_tag[tag];
    t.input_tokens += u.input_tokens;
    t.output_tokens += u.output_tokens;
    t.calls += u.calls;
  }
  return *this;
}

bool TokenUsage::consistent() const {
  TagUsage sum;
  for (const auto& [_, u] : per_tag) {
    if (u.input_tokens < 0 || u.output_tokens < 0 || u.calls < 0) return false;
    sum.input_tokens += u.input_tokens;
    sum.output_tokens += u.output_tokens;
    sum.calls += u.calls;
  }
  return sum.input_tokens == input_tokens && sum.output_tokens == output_tokens &&
         sum.calls == calls;
}

double estimate_cost(std::int64_t input_tokens, std::int64_t output_tokens, double price_in,
                     double price_out) {
  if (price_in < 0 || price_out < 0) {
    throw Error(ErrorKind::validation, "token prices must be non-negative");
  }
  return static_cast<double>(input_tokens) * price_in / 1e6 +
         static_cast<double>(output_tokens) * price_out / 1e6;
}

double estimate_cost(const TokenUsage& usage, double price_in, double price_out) {
  return estimate_cost(usage.input_tokens, usage.output_tokens, price_in, price_out);
}

std::int64_t count_words(std::string_view text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

// ---- scripted backend ----

ScriptedBackend::ScriptedBackend(std::vector<Entry> entries) : entries_(std::move(entries)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& fixture) {
  if (!fixture.is_object()) throw Error(ErrorKind::parse, "script fixture must be a JSON object");
  auto text_of = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };

  auto backend = std::make_shared<ScriptedBackend>();
  if (fixture.contains("defaults")) {
    for (const auto& [tag, v] : fixture["defaults"].items()) {
      backend->set_default(prompt_tag_from_string(tag), text_of(v));
    }
  }
  if (fixture.contains("responses")) {
    for (const auto& r : fixture["responses"]) {
      Entry e;
      e.tag = prompt_tag_from_string(r.at("tag").get<std::string>());
      if (r.contains("user")) e.user = r["user"].get<std::string>();
      if (r.contains("seq")) e.seq = r["seq"].get<std::int64_t>();
      if (r.contains("error")) {
        e.transport_error = true;
      } else {
        e.response = text_of(r.at("response"));
      }
      backend->add(std::move(e));
    }
  }
  return backend;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open script fixture " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, "script fixture " + path.string() + ": " + e.what());
  }
}

void ScriptedBackend::add(Entry entry) {
  std::lock_guard lock(mutex_);
  entries_.push_back(std::move(entry));
}

void ScriptedBackend::set_default(PromptTag tag, std::string response) {
  add(Entry{"*", tag, std::nullopt, std::move(response), false});
}

BackendReply ScriptedBackend::send(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  const auto seq = ++counters_[{request.scope, request.tag}];
  if (recording_) recorded_.push_back(request);

  auto pick = [&](bool user_exact, bool with_seq) -> const Entry* {
    for (const auto& e : entries_) {
      if (e.tag != request.tag) continue;
      if (user_exact ? e.user != request.scope : e.user != "*") continue;
      if (with_seq ? e.seq != seq : e.seq.has_value()) continue;
      return &e;
    }
    return nullptr;
  };
  const Entry* hit = pick(true, true);
  if (!hit) hit = pick(false, true);
  if (!hit) hit = pick(true, false);
  if (!hit) hit = pick(false, false);
  if (!hit) {
    throw Error(ErrorKind::transport, "scripted backend has no response for scope '" +
                                          request.scope + "' tag " +
                                          std::string(to_string(request.tag)) + " seq " +
                                          std::to_string(seq));
  }
  if (hit->transport_error) {
    throw Error(ErrorKind::transport, "scripted transport failure");
  }
  return BackendReply{hit->response, std::nullopt, std::nullopt};
}

std::vector<ChatRequest> ScriptedBackend::recorded() const {
  std::lock_guard lock(mutex_);
  return recorded_;
}

std::int64_t ScriptedBackend::calls(std::string_view scope, PromptTag tag) const {
  std::lock_guard lock(mutex_);
  auto it = counters_.find({std::string(scope), tag});
  return it == counters_.end() ? 0 : it->second;
}

// ---- remote backend ----

RemoteBackend::RemoteBackend(Settings settings) : settings_(std::move(settings)) {
  const auto& url = settings_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::config, "LLM endpoint must be an absolute URL: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

RemoteBackend RemoteBackend::from_env() {
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? v : "";
  };
  Settings s;
  s.endpoint = env("TIERMEM_LLM_ENDPOINT");
  s.model = env("TIERMEM_LLM_MODEL");
  s.api_key = env("TIERMEM_LLM_API_KEY");
  if (s.endpoint.empty() || s.model.empty()) {
    throw Error(ErrorKind::config,
                "remote backend needs TIERMEM_LLM_ENDPOINT and TIERMEM_LLM_MODEL");
  }
  return RemoteBackend(std::move(s));
}

BackendReply RemoteBackend::send(const ChatRequest& request) {
  json body;
  body["model"] = settings_.model;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;
  body["messages"] = json::array();
  if (!request.system.empty()) {
    body["messages"].push_back({{"role", "system"}, {"content", request.system}});
  }
  body["messages"].push_back({{"role", "user"}, {"content", request.user}});

  httplib::Client client(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(settings_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(settings_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!settings_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + settings_.api_key);
  }

  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorKind::transport,
                "request to " + origin_ + path_ + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorKind::transport, "LLM endpoint returned HTTP " + std::to_string(res->status));
  }

  BackendReply reply;
  try {
    const auto j = json::parse(res->body);
    reply.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (j.contains("usage")) {
      const auto& u = j["usage"];
      if (u.contains("prompt_tokens")) reply.input_tokens = u["prompt_tokens"].get<std::int64_t>();
      if (u.contains("completion_tokens")) {
        reply.output_tokens = u["completion_tokens"].get<std::int64_t>();
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::transport, std::string("malformed completion payload: ") + e.what());
  }
  return reply;
}

// ---- gateway ----

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, RetryPolicy retry)
    : backend_(std::move(backend)), retry_(retry) {
  if (!backend_) throw Error(ErrorKind::config, "gateway requires a backend");
}

Completion Gateway::complete(const ChatRequest& request) {
  auto out = complete_metered(request);
  if (count_words(out.text) == 0) {
    throw Error(ErrorKind::empty_response,
                std::string(to_string(request.tag)) + " call returned an empty response");
  }
  return out;
}

Completion Gateway::complete_metered(const ChatRequest& request) {
  BackendReply reply;
  for (int attempt = 0;; ++attempt) {
    try {
      reply = backend_->send(request);
      break;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::transport || attempt >= retry_.transport_retries) throw;
    }
  }

  Completion out;
  out.text = std::move(reply.text);
  const auto in_tokens =
      reply.input_tokens.value_or(count_words(request.system) + count_words(request.user));
  const auto out_tokens = reply.output_tokens.value_or(count_words(out.text));
  out.usage.record(request.tag, in_tokens, out_tokens);
  {
    std::lock_guard lock(meter_mutex_);
    meter_ += out.usage;
  }
  return out;
}

TokenUsage Gateway::usage() const {
  std::lock_guard lock(meter_mutex_);
  return meter_;
}

Completion Session::complete(ChatRequest request) {
  request.scope = scope_;
  request.temperature = 0.0;
  auto c = gateway_->complete_metered(request);
  usage_ += c.usage;
  if (count_words(c.text) == 0) {
    throw Error(ErrorKind::empty_response,
                std::string(to_string(request.tag)) + " call returned an empty response");
  }
  return c;
}

}  // namespace tiermem
