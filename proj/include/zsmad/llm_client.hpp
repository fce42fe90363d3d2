// Copyright 2026 The zsmad Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <chrono>
#include <compare>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsmad/manifest.hpp"
#include "zsmad/prompts.hpp"

namespace zsmad {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 401/403 from the provider, or a missing API key. Never retried.
class AuthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CacheCorrupt : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProviderConfig {
  /// `https://host/v1` style prefix, or `mock:<script.jsonl>` for the
  /// in-process scripted provider.
  std::string base_url;
  std::string model_name = "gpt-4-turbo-2024-04-09";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_parallel = 4;
  int max_retries = 5;
  double request_timeout = 120.0;  // seconds
  std::optional<double> temperature;

  /// Throws ConfigError.
  void validate() const;
  bool is_mock() const;
  /// Script path of a `mock:` URL.
  std::filesystem::path mock_script() const;
};

/// Missing fields keep their defaults; unknown fields are rejected.
ProviderConfig provider_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProviderConfig& c);
ProviderConfig load_provider_config(const std::filesystem::path& path);

enum class ResponseStatus { ok, refusal, transport_error };
std::string_view to_string(ResponseStatus s);
std::optional<ResponseStatus> parse_response_status(std::string_view s);

struct QueryKey {
  std::string sample_id;
  int prompt_id = 0;
  int round = 0;
  auto operator<=>(const QueryKey&) const = default;
};

struct RawResponse {
  QueryKey key;
  std::string request_hash;
  std::string text;
  ResponseStatus status = ResponseStatus::transport_error;
  std::string timestamp;
  std::string error;  // transport diagnostics; empty otherwise

  bool operator==(const RawResponse&) const = default;
};

nlohmann::json to_json(const RawResponse& r);
RawResponse raw_response_from_json(const nlohmann::json& j);

/// SHA-256 over image bytes, both message texts, model and temperature.
std::string request_hash(const RequestMessages& request, const ProviderConfig& config);

/// Append-only JSONL store of RawResponse records. Reads keep the latest
/// record per key. Appends are serialized and flushed line by line.
class ResponseCache {
 public:
  /// Loads `path` if it exists; throws CacheCorrupt naming the bad line.
  explicit ResponseCache(std::filesystem::path path);
  /// Not backed by a file.
  ResponseCache();

  ResponseCache(const ResponseCache&) = delete;
  ResponseCache& operator=(const ResponseCache&) = delete;

  std::optional<RawResponse> lookup(const QueryKey& key) const;
  void append(const RawResponse& r);

  /// Latest record per key, ordered by key.
  std::vector<RawResponse> latest() const;
  std::size_t record_count() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  mutable std::mutex mu_;
  std::filesystem::path path_;
  std::ofstream out_;
  std::map<QueryKey, RawResponse> latest_;
  std::size_t n_records_ = 0;
};

/// One provider answer. `http_status` is 0 for connection failures and
/// timeouts, -1 for a 200 with an unusable body.
struct ChatReply {
  int http_status = 0;
  std::string text;
  bool explicit_refusal = false;
  std::string error;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatReply complete(const RequestMessages& request, const QueryKey& key,
                             const ProviderConfig& config) = 0;
};

/// Deterministic provider driven by a table of scripted replies. A key may
/// carry a sequence of steps, consumed one per call; the last step repeats.
/// Lookup order: (sample, prompt, round), (sample, prompt, *), (*, prompt,
/// round), (*, prompt, *), (*, *, *).
class ScriptedProvider : public ChatProvider {
 public:
  struct Step {
    int http_status = 200;
    std::string text;
  };

  void script(std::optional<std::string> sample_id, std::optional<int> prompt_id,
              std::optional<int> round, std::vector<Step> steps);
  void reply(const std::string& sample_id, int prompt_id, int round, std::string text);

  /// JSONL lines: {sample_id?, prompt_id?, round?, reply?, status?, replies?}
  /// where `replies` is a list of {reply?, status?} steps.
  static std::unique_ptr<ScriptedProvider> from_jsonl(const std::filesystem::path& path);

  /// Simulated per-call service time.
  void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }

  ChatReply complete(const RequestMessages& request, const QueryKey& key,
                     const ProviderConfig& config) override;

  std::size_t calls() const { return calls_.load(); }
  int max_in_flight() const { return max_in_flight_.load(); }

 private:
  using PatternKey = std::tuple<std::string, int, int>;  // "" / 0 act as wildcards
  const std::vector<Step>* find(const QueryKey& key) const;

  std::map<PatternKey, std::vector<Step>> table_;
  std::mutex mu_;
  std::map<QueryKey, std::size_t> consumed_;
  std::chrono::milliseconds latency_{0};
  std::atomic<std::size_t> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

/// OpenAI-compatible chat-completions body: system message with the
/// preamble, user message with a text part and a base64 image_url part.
nlohmann::json chat_request_body(const RequestMessages& request, const ProviderConfig& config);

/// Reads choices[0].message from a chat-completions response.
ChatReply chat_reply_from_body(const nlohmann::json& body);

/// Real HTTP(S) transport. Sends `X-Sample-Id`, `X-Prompt-Id` and `X-Round`
/// headers so a local mock server can key its script.
class HttpChatProvider : public ChatProvider {
 public:
  explicit HttpChatProvider(std::string api_key);
  ChatReply complete(const RequestMessages& request, const QueryKey& key,
                     const ProviderConfig& config) override;

 private:
  std::string api_key_;
};

/// Local HTTP server speaking the chat-completions wire format, answering
/// from a ScriptedProvider.
class MockChatServer {
 public:
  explicit MockChatServer(ScriptedProvider& provider);
  ~MockChatServer();

  MockChatServer(const MockChatServer&) = delete;
  MockChatServer& operator=(const MockChatServer&) = delete;

  /// Requests without `Authorization: Bearer <key>` get 401.
  void require_api_key(std::string key);

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void listen_blocking(const std::string& host, int port);
  void stop();

  std::size_t requests() const { return requests_.load(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<std::size_t> requests_{0};
};

struct BackoffPolicy {
  double base_seconds = 1.0;
  double factor = 2.0;
  double jitter = 0.2;  // +/- fraction
  double cap_seconds = 60.0;

  /// Delay before retry number `attempt` (1-based); `unit` in [0,1) picks the
  /// jitter.
  std::chrono::duration<double> delay(int attempt, double unit) const;
};

/// Thrown by LlmClient::query once retries are exhausted. The
/// transport_error record has already been persisted.
class TransportExhausted : public std::runtime_error {
 public:
  TransportExhausted(RawResponse record, const std::string& what);
  RawResponse record;
};

class LlmClient {
 public:
  struct Options {
    BackoffPolicy backoff;
    std::function<void(std::chrono::duration<double>)> sleep;
    std::function<std::string()> clock;
  };

  LlmClient(ProviderConfig config, ChatProvider& provider, ResponseCache& cache);
  LlmClient(ProviderConfig config, ChatProvider& provider, ResponseCache& cache,
            Options options);

  /// Returns the cached record when the key already holds an ok or refusal
  /// answer for the same request hash; otherwise calls the provider with
  /// retries on 429, 5xx and timeouts and persists the outcome.
  RawResponse query(const RequestMessages& request, const QueryKey& key);

  /// The reusable cached record for this request, if any.
  std::optional<RawResponse> cached(const RequestMessages& request, const QueryKey& key) const;

  const ProviderConfig& config() const { return config_; }

 private:
  ProviderConfig config_;
  ChatProvider& provider_;
  ResponseCache& cache_;
  Options options_;
};

struct BatchResult {
  std::size_t cached = 0;
  std::size_t ok = 0;
  std::size_t refusal = 0;
  std::size_t transport_error = 0;
  /// Per-key problems (transport exhaustion, unreadable images).
  std::vector<std::string> failures;
};

/// Queries every (eval sample, prompt, round) with at most
/// `config.max_parallel` requests in flight. A failing key never stops the
/// batch; AuthError does.
BatchResult run_batch(const Manifest& manifest, std::span<const int> prompt_ids, int rounds,
                      LlmClient& client);

/// UTC, ISO-8601, second resolution.
std::string utc_timestamp();

}  // namespace zsmad
