#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tiermem/error.hpp"

namespace tiermem {

enum class PromptTag { extract, synthesize, plan, rank, categorize };

std::string_view to_string(PromptTag tag) noexcept;
PromptTag prompt_tag_from_string(std::string_view name);

struct ChatRequest {
  std::string system;
  std::string user;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  PromptTag tag = PromptTag::extract;
  // Per-user key; the scripted backend sequences responses per (scope, tag).
  std::string scope;
};

struct TagUsage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t calls = 0;

  bool operator==(const TagUsage&) const = default;
};

struct TokenUsage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t calls = 0;
  std::map<std::string, TagUsage> per_tag;

  void record(PromptTag tag, std::int64_t input, std::int64_t output);
  TokenUsage& operator+=(const TokenUsage& other);
  // Totals must equal the per-tag sums.
  bool consistent() const;

  bool operator==(const TokenUsage&) const = default;
};

// USD for the given usage at per-million-token prices.
double estimate_cost(std::int64_t input_tokens, std::int64_t output_tokens, double price_in,
                     double price_out);
double estimate_cost(const TokenUsage& usage, double price_in, double price_out);

// Deterministic stand-in for a tokenizer: whitespace-delimited words.
std::int64_t count_words(std::string_view text);

struct BackendReply {
  std::string text;
  std::optional<std::int64_t> input_tokens;
  std::optional<std::int64_t> output_tokens;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string name() const = 0;
  // Throws Error{transport} on delivery failure.
  virtual BackendReply send(const ChatRequest& request) = 0;
};

// Fixture-driven backend. Responses are looked up by (scope, tag, sequence)
// where the sequence counts calls per (scope, tag) starting at 1:
//   1. entry with matching user and seq
//   2. entry with user "*" (or absent) and matching seq
//   3. entry with matching user and no seq (per-user default)
//   4. entry with no user and no seq, or the "defaults" table
// Unmatched requests throw so tests fail loudly.
class ScriptedBackend : public ChatBackend {
 public:
  struct Entry {
    std::string user = "*";
    PromptTag tag = PromptTag::extract;
    std::optional<std::int64_t> seq;
    std::string response;
    bool transport_error = false;
  };

  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<Entry> entries);

  static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& fixture);
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  void add(Entry entry);
  void set_default(PromptTag tag, std::string response);
  void set_recording(bool on) { recording_ = on; }

  std::string name() const override { return "scripted"; }
  BackendReply send(const ChatRequest& request) override;

  std::vector<ChatRequest> recorded() const;
  std::int64_t calls(std::string_view scope, PromptTag tag) const;

 private:
  mutable std::mutex mutex_;
  std::vector<Entry> entries_;
  std::map<std::pair<std::string, PromptTag>, std::int64_t> counters_;
  std::vector<ChatRequest> recorded_;
  bool recording_ = false;
};

// OpenAI-compatible chat-completions endpoint.
class RemoteBackend : public ChatBackend {
 public:
  struct Settings {
    std::string endpoint;  // full URL, e.g. https://host/v1/chat/completions
    std::string model;
    std::string api_key;
    std::chrono::milliseconds timeout{60000};
  };

  explicit RemoteBackend(Settings settings);
  // Reads TIERMEM_LLM_ENDPOINT, TIERMEM_LLM_MODEL and TIERMEM_LLM_API_KEY.
  static RemoteBackend from_env();

  std::string name() const override { return "remote"; }
  BackendReply send(const ChatRequest& request) override;

 private:
  Settings settings_;
  std::string origin_;
  std::string path_;
};

struct RetryPolicy {
  int transport_retries = 1;
  int parse_retries = 1;
};

struct Completion {
  std::string text;
  TokenUsage usage;
};

// Shared between user sessions; the meter is mutex-protected.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<ChatBackend> backend, RetryPolicy retry = {});

  // Throws Error{empty_response} when the backend returns only whitespace.
  Completion complete(const ChatRequest& request);
  // Same, but hands back empty text instead of throwing; usage is metered either way.
  Completion complete_metered(const ChatRequest& request);

  TokenUsage usage() const;
  const RetryPolicy& retry_policy() const { return retry_; }
  ChatBackend& backend() { return *backend_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  RetryPolicy retry_;
  mutable std::mutex meter_mutex_;
  TokenUsage meter_;
};

// One user's view of the gateway: stamps the scope and keeps a local meter.
class Session {
 public:
  Session(Gateway& gateway, std::string scope)
      : gateway_(&gateway), scope_(std::move(scope)) {}

  Completion complete(ChatRequest request);

  const TokenUsage& usage() const { return usage_; }
  const std::string& scope() const { return scope_; }
  int parse_retries() const { return gateway_->retry_policy().parse_retries; }

 private:
  Gateway* gateway_;
  std::string scope_;
  TokenUsage usage_;
};

// Sends the request, re-sending it on parse failure up to the policy limit.
// Returns nullopt when every attempt failed to parse; transport errors propagate.
template <typename Parser>
auto complete_parsed(Session& session, const ChatRequest& request, Parser&& parse,
                     std::vector<std::string>* warnings = nullptr)
    -> std::optional<decltype(parse(std::string{}))> {
  const int attempts = 1 + session.parse_retries();
  for (int attempt = 0; attempt < attempts; ++attempt) {
    std::string text;
    try {
      text = session.complete(request).text;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::empty_response) throw;
      if (warnings) warnings->push_back(std::string(to_string(request.tag)) + ": empty response");
      continue;
    }
    try {
      return parse(text);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::parse) throw;
      if (warnings) warnings->push_back(std::string(to_string(request.tag)) + ": " + e.what());
    }
  }
  return std::nullopt;
}

}  // namespace tiermem
