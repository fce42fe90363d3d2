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

#include "zsmad/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <random>
#include <set>
#include <thread>

#include "zsmad/digest.hpp"
#include "zsmad/response_parser.hpp"

namespace zsmad {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ProviderConfig

void ProviderConfig::validate() const {
  if (base_url.empty()) throw ConfigError("provider config: base_url is empty");
  if (model_name.empty()) throw ConfigError("provider config: model is empty");
  if (max_parallel < 1) throw ConfigError("provider config: max_parallel must be >= 1");
  if (max_retries < 0) throw ConfigError("provider config: max_retries must be >= 0");
  if (!(request_timeout > 0.0)) throw ConfigError("provider config: timeout must be > 0");
  if (temperature && !std::isfinite(*temperature)) {
    throw ConfigError("provider config: temperature must be finite");
  }
  if (!is_mock() && !base_url.starts_with("http://") && !base_url.starts_with("https://")) {
    throw ConfigError("provider config: base_url must be http(s):// or mock:");
  }
}

bool ProviderConfig::is_mock() const { return base_url.starts_with("mock:"); }

std::filesystem::path ProviderConfig::mock_script() const {
  return is_mock() ? std::filesystem::path(base_url.substr(5)) : std::filesystem::path();
}

ProviderConfig provider_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("provider config must be a JSON object");
  static const std::set<std::string> kKnown = {"base_url",    "model",       "api_key_env",
                                               "max_parallel", "max_retries", "request_timeout",
                                               "temperature"};
  for (const auto& [k, v] : j.items()) {
    if (!kKnown.count(k)) throw ConfigError("provider config: unknown field '" + k + "'");
  }
  ProviderConfig c;
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.model_name = j.value("model", c.model_name);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.max_parallel = j.value("max_parallel", c.max_parallel);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.request_timeout = j.value("request_timeout", c.request_timeout);
    if (j.contains("temperature") && !j.at("temperature").is_null()) {
      c.temperature = j.at("temperature").get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("provider config: ") + e.what());
  }
  return c;
}

json to_json(const ProviderConfig& c) {
  json j = {{"base_url", c.base_url},
            {"model", c.model_name},
            {"api_key_env", c.api_key_env},
            {"max_parallel", c.max_parallel},
            {"max_retries", c.max_retries},
            {"request_timeout", c.request_timeout}};
  j["temperature"] = c.temperature ? json(*c.temperature) : json(nullptr);
  return j;
}

ProviderConfig load_provider_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open provider config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("provider config " + path.string() + ": " + e.what());
  }
  auto c = provider_config_from_json(j);
  // mock scripts are relative to the config file
  if (c.is_mock()) {
    const auto script = c.mock_script();
    if (script.is_relative()) c.base_url = "mock:" + (path.parent_path() / script).string();
  }
  return c;
}

// ---------------------------------------------------------------------------
// Records

std::string_view to_string(ResponseStatus s) {
  switch (s) {
    case ResponseStatus::ok: return "ok";
    case ResponseStatus::refusal: return "refusal";
    case ResponseStatus::transport_error: return "transport_error";
  }
  return "?";
}

std::optional<ResponseStatus> parse_response_status(std::string_view s) {
  for (auto v : {ResponseStatus::ok, ResponseStatus::refusal, ResponseStatus::transport_error}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

json to_json(const RawResponse& r) {
  json j = {{"sample_id", r.key.sample_id},
            {"prompt_id", r.key.prompt_id},
            {"round", r.key.round},
            {"request_hash", r.request_hash},
            {"text", r.text},
            {"status", to_string(r.status)},
            {"timestamp", r.timestamp}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

RawResponse raw_response_from_json(const json& j) {
  RawResponse r;
  r.key.sample_id = j.at("sample_id").get<std::string>();
  r.key.prompt_id = j.at("prompt_id").get<int>();
  r.key.round = j.at("round").get<int>();
  r.request_hash = j.at("request_hash").get<std::string>();
  r.text = j.at("text").get<std::string>();
  const auto status = parse_response_status(j.at("status").get<std::string>());
  if (!status) throw std::invalid_argument("unknown status");
  r.status = *status;
  r.timestamp = j.value("timestamp", "");
  r.error = j.value("error", "");
  if (r.status == ResponseStatus::ok && r.text.empty()) {
    throw std::invalid_argument("ok record with empty text");
  }
  if (r.key.round < 1 || !is_valid_prompt_id(r.key.prompt_id)) {
    throw std::invalid_argument("bad key");
  }
  return r;
}

std::string request_hash(const RequestMessages& request, const ProviderConfig& config) {
  std::string material;
  material.reserve(request.image.bytes.size() + request.user_text.size() + 512);
  material.append(reinterpret_cast<const char*>(request.image.bytes.data()),
                  request.image.bytes.size());
  material.push_back('\0');
  material += request.system_text;
  material.push_back('\0');
  material += request.user_text;
  material.push_back('\0');
  material += config.model_name;
  material.push_back('\0');
  material += config.temperature ? json(*config.temperature).dump() : "unset";
  return sha256_hex(material);
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache() = default;

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      try {
        auto r = raw_response_from_json(json::parse(line));
        latest_[r.key] = std::move(r);
        ++n_records_;
      } catch (const std::exception& e) {
        throw CacheCorrupt(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  } else if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw CacheCorrupt("cannot open cache " + path_.string() + " for append");
}

std::optional<RawResponse> ResponseCache::lookup(const QueryKey& key) const {
  std::lock_guard lock(mu_);
  auto it = latest_.find(key);
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::append(const RawResponse& r) {
  std::lock_guard lock(mu_);
  if (out_.is_open()) {
    out_ << to_json(r).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    out_.flush();
  }
  latest_[r.key] = r;
  ++n_records_;
}

std::vector<RawResponse> ResponseCache::latest() const {
  std::lock_guard lock(mu_);
  std::vector<RawResponse> out;
  out.reserve(latest_.size());
  for (const auto& [k, v] : latest_) out.push_back(v);
  return out;
}

std::size_t ResponseCache::record_count() const {
  std::lock_guard lock(mu_);
  return n_records_;
}

// ---------------------------------------------------------------------------
// ScriptedProvider

void ScriptedProvider::script(std::optional<std::string> sample_id, std::optional<int> prompt_id,
                              std::optional<int> round, std::vector<Step> steps) {
  if (steps.empty()) throw std::invalid_argument("scripted key needs at least one step");
  table_[{sample_id.value_or(""), prompt_id.value_or(0), round.value_or(0)}] = std::move(steps);
}

void ScriptedProvider::reply(const std::string& sample_id, int prompt_id, int round,
                             std::string text) {
  script(sample_id, prompt_id, round, {Step{200, std::move(text)}});
}

std::unique_ptr<ScriptedProvider> ScriptedProvider::from_jsonl(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock script " + path.string());
  auto provider = std::make_unique<ScriptedProvider>();
  std::string line;
  std::size_t line_no = 0;
  auto step_of = [](const json& j) {
    return Step{j.value("status", 200), j.value("reply", std::string())};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      std::optional<std::string> sample;
      std::optional<int> prompt, round;
      if (j.contains("sample_id")) sample = j.at("sample_id").get<std::string>();
      if (j.contains("prompt_id")) prompt = j.at("prompt_id").get<int>();
      if (j.contains("round")) round = j.at("round").get<int>();
      std::vector<Step> steps;
      if (j.contains("replies")) {
        for (const auto& s : j.at("replies")) steps.push_back(step_of(s));
      } else {
        steps.push_back(step_of(j));
      }
      provider->script(sample, prompt, round, std::move(steps));
    } catch (const std::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return provider;
}

const std::vector<ScriptedProvider::Step>* ScriptedProvider::find(const QueryKey& key) const {
  const PatternKey candidates[] = {
      {key.sample_id, key.prompt_id, key.round}, {key.sample_id, key.prompt_id, 0},
      {"", key.prompt_id, key.round},            {"", key.prompt_id, 0},
      {"", 0, 0},
  };
  for (const auto& c : candidates) {
    if (auto it = table_.find(c); it != table_.end()) return &it->second;
  }
  return nullptr;
}

ChatReply ScriptedProvider::complete(const RequestMessages&, const QueryKey& key,
                                     const ProviderConfig&) {
  ++calls_;
  const int now = ++in_flight_;
  int seen = max_in_flight_.load();
  while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
  }
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

  ChatReply reply;
  if (const auto* steps = find(key)) {
    std::size_t idx;
    {
      std::lock_guard lock(mu_);
      idx = std::min(consumed_[key]++, steps->size() - 1);
    }
    const auto& step = (*steps)[idx];
    reply.http_status = step.http_status;
    if (step.http_status == 200) {
      reply.text = step.text;
    } else {
      reply.error = "scripted HTTP " + std::to_string(step.http_status);
    }
  } else {
    reply.http_status = 400;
    reply.error = "no scripted reply for " + key.sample_id + "/" +
                  std::to_string(key.prompt_id) + "/" + std::to_string(key.round);
  }
  --in_flight_;
  return reply;
}

// ---------------------------------------------------------------------------
// Wire format

json chat_request_body(const RequestMessages& request, const ProviderConfig& config) {
  json body = {
      {"model", config.model_name},
      {"messages",
       json::array({
           {{"role", "system"}, {"content", request.system_text}},
           {{"role", "user"},
            {"content", json::array({
                            {{"type", "text"}, {"text", request.user_text}},
                            {{"type", "image_url"},
                             {"image_url", {{"url", request.image.data_url()}}}},
                        })}},
       })},
  };
  if (config.temperature) body["temperature"] = *config.temperature;
  return body;
}

ChatReply chat_reply_from_body(const json& body) {
  ChatReply reply;
  reply.http_status = 200;
  try {
    const auto& message = body.at("choices").at(0).at("message");
    if (message.contains("refusal") && message.at("refusal").is_string() &&
        !message.at("refusal").get<std::string>().empty()) {
      reply.text = message.at("refusal").get<std::string>();
      reply.explicit_refusal = true;
      return reply;
    }
    const auto& content = message.at("content");
    if (content.is_string()) {
      reply.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.value("type", "") == "text") reply.text += part.value("text", "");
      }
    }
  } catch (const json::exception& e) {
    reply.http_status = -1;
    reply.error = std::string("malformed completion: ") + e.what();
    return reply;
  }
  if (reply.text.empty()) {
    reply.http_status = -1;
    reply.error = "empty completion";
  }
  return reply;
}

// ---------------------------------------------------------------------------
// LlmClient

std::chrono::duration<double> BackoffPolicy::delay(int attempt, double unit) const {
  const double raw = base_seconds * std::pow(factor, std::max(0, attempt - 1));
  const double jittered = raw * (1.0 + jitter * (2.0 * unit - 1.0));
  return std::chrono::duration<double>(std::clamp(jittered, 0.0, cap_seconds));
}

TransportExhausted::TransportExhausted(RawResponse r, const std::string& what)
    : std::runtime_error(what), record(std::move(r)) {}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

LlmClient::LlmClient(ProviderConfig config, ChatProvider& provider, ResponseCache& cache)
    : LlmClient(std::move(config), provider, cache, Options{}) {}

LlmClient::LlmClient(ProviderConfig config, ChatProvider& provider, ResponseCache& cache,
                     Options options)
    : config_(std::move(config)), provider_(provider), cache_(cache), options_(std::move(options)) {
  config_.validate();
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
  }
  if (!options_.clock) options_.clock = utc_timestamp;
}

namespace {

bool retryable(int status) { return status == 0 || status == 429 || (status >= 500 && status < 600); }

}  // namespace

std::optional<RawResponse> LlmClient::cached(const RequestMessages& request,
                                             const QueryKey& key) const {
  auto hit = cache_.lookup(key);
  if (hit && hit->status != ResponseStatus::transport_error &&
      hit->request_hash == request_hash(request, config_)) {
    return hit;
  }
  return std::nullopt;
}

RawResponse LlmClient::query(const RequestMessages& request, const QueryKey& key) {
  if (auto hit = cached(request, key)) return *hit;
  const auto hash = request_hash(request, config_);

  RawResponse record;
  record.key = key;
  record.request_hash = hash;

  // Jitter is seeded per key so retries are reproducible.
  std::seed_seq seed(hash.begin(), hash.end());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) options_.sleep(options_.backoff.delay(attempt, unit(rng)));
    const ChatReply reply = provider_.complete(request, key, config_);
    if (reply.http_status == 200) {
      record.text = reply.text;
      record.status = (reply.explicit_refusal || classify_refusal(reply.text, key.prompt_id))
                          ? ResponseStatus::refusal
                          : ResponseStatus::ok;
      record.timestamp = options_.clock();
      cache_.append(record);
      return record;
    }
    if (reply.http_status == 401 || reply.http_status == 403) {
      throw AuthError("provider rejected credentials (HTTP " +
                      std::to_string(reply.http_status) + ")");
    }
    last_error = reply.error.empty() ? "HTTP " + std::to_string(reply.http_status) : reply.error;
    if (!retryable(reply.http_status)) break;
  }

  record.status = ResponseStatus::transport_error;
  record.error = last_error;
  record.timestamp = options_.clock();
  cache_.append(record);
  throw TransportExhausted(record, key.sample_id + "/prompt" + std::to_string(key.prompt_id) +
                                       "/round" + std::to_string(key.round) + ": " + last_error);
}

// ---------------------------------------------------------------------------
// run_batch

BatchResult run_batch(const Manifest& manifest, std::span<const int> prompt_ids, int rounds,
                      LlmClient& client) {
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  for (int p : prompt_ids) prompt_spec(p);

  struct Task {
    const Sample* sample;
    int prompt_id;
  };
  std::vector<Task> tasks;
  for (const auto& s : manifest.samples) {
    if (s.role != Role::eval) continue;
    for (int p : prompt_ids) tasks.push_back({&s, p});
  }

  BatchResult result;
  std::mutex result_mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr fatal;

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const auto& task = tasks[i];
      std::optional<RequestMessages> request;
      try {
        request = build_request(manifest, *task.sample, task.prompt_id);
      } catch (const std::exception& e) {
        std::lock_guard lock(result_mu);
        result.failures.push_back(task.sample->id + ": " + e.what());
        continue;
      }
      for (int round = 1; round <= rounds && !stop.load(); ++round) {
        const QueryKey key{task.sample->id, task.prompt_id, round};
        if (auto hit = client.cached(*request, key)) {
          std::lock_guard lock(result_mu);
          ++result.cached;
          continue;
        }
        try {
          const auto r = client.query(*request, key);
          std::lock_guard lock(result_mu);
          if (r.status == ResponseStatus::ok) {
            ++result.ok;
          } else {
            ++result.refusal;
          }
        } catch (const TransportExhausted& e) {
          std::lock_guard lock(result_mu);
          ++result.transport_error;
          result.failures.push_back(e.what());
        } catch (...) {
          std::lock_guard lock(result_mu);
          if (!fatal) fatal = std::current_exception();
          stop = true;
        }
      }
    }
  };

  const auto n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(client.config().max_parallel),
                            std::max<std::size_t>(tasks.size(), 1));
  {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);
  std::sort(result.failures.begin(), result.failures.end());
  return result;
}

}  // namespace zsmad
