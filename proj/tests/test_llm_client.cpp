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

#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "zsmad/llm_client.hpp"

using namespace zsmad;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

ProviderConfig mock_config(int max_parallel = 4, int max_retries = 5) {
  ProviderConfig c;
  c.base_url = "mock:inline";
  c.max_parallel = max_parallel;
  c.max_retries = max_retries;
  return c;
}

struct SleepLog {
  std::vector<double> seconds;
  LlmClient::Options options() {
    LlmClient::Options o;
    o.sleep = [this](std::chrono::duration<double> d) { seconds.push_back(d.count()); };
    o.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
    return o;
  }
};

RequestMessages request(int prompt = 1) { return build_request(testing::tiny_png(), prompt); }

std::string strip_timestamps(const std::string& jsonl) {
  std::istringstream in(jsonl);
  std::string line, out;
  while (std::getline(in, line)) {
    auto j = json::parse(line);
    j.erase("timestamp");
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("request hash") {
  const auto c = mock_config();
  const auto h = request_hash(request(), c);
  CHECK(h.size() == 64);
  CHECK(request_hash(request(), c) == h);
  auto warm = c;
  warm.temperature = 0.7;
  CHECK(request_hash(request(), warm) != h);
  auto other = c;
  other.model_name = "another-model";
  CHECK(request_hash(request(), other) != h);
  CHECK(request_hash(request(2), c) != h);
}

TEST_CASE("provider config") {
  const auto c = provider_config_from_json(json{{"base_url", "https://api.example.com/v1"}});
  CHECK(c.model_name == "gpt-4-turbo-2024-04-09");
  CHECK(c.api_key_env == "OPENAI_API_KEY");
  CHECK_FALSE(c.temperature.has_value());
  CHECK_THROWS_AS(provider_config_from_json(json{{"base_url", "mock:x"}, {"colour", 1}}), ConfigError);
  // Validation runs after command-line overrides are applied.
  CHECK_THROWS_AS(provider_config_from_json(json{{"base_url", "mock:x"}, {"max_parallel", 0}}).validate(), ConfigError);
  CHECK_THROWS_AS(provider_config_from_json(json{{"base_url", "mock:x"}, {"request_timeout", 0}}).validate(), ConfigError);
  CHECK_THROWS_AS(provider_config_from_json(json{{"base_url", "ftp://x"}}).validate(), ConfigError);
  CHECK_THROWS_AS(ProviderConfig{}.validate(), ConfigError);
  CHECK_NOTHROW(c.validate());

  testing::TempDir dir;
  testing::write_file(dir / "cfg/p.json", R"({"base_url": "mock:script.jsonl", "temperature": 0})");
  const auto loaded = load_provider_config(dir / "cfg/p.json");
  CHECK(loaded.mock_script() == dir / "cfg/script.jsonl");
  CHECK(loaded.temperature == 0.0);
  CHECK(provider_config_from_json(to_json(loaded)).base_url == loaded.base_url);
}

TEST_CASE("scripted replies and refusals") {
  ScriptedProvider provider;
  provider.reply("m001", 1, 1, "yes");
  provider.reply("m001", 1, 2, "I'm sorry, I can't assist with identifying or analyzing this image.");
  ResponseCache cache;
  SleepLog sleeps;
  LlmClient client(mock_config(), provider, cache, sleeps.options());

  const auto ok = client.query(request(), {"m001", 1, 1});
  CHECK(ok.status == ResponseStatus::ok);
  CHECK(ok.text == "yes");
  const auto refused = client.query(request(), {"m001", 1, 2});
  CHECK(refused.status == ResponseStatus::refusal);
  CHECK(provider.calls() == 2);

  // Cache hits: no further provider calls.
  CHECK(client.query(request(), {"m001", 1, 1}) == ok);
  CHECK(client.query(request(), {"m001", 1, 2}) == refused);
  CHECK(provider.calls() == 2);
  CHECK(sleeps.seconds.empty());
}

TEST_CASE("explicit refusal field") {
  const auto r = chat_reply_from_body(json::parse(
      R"({"choices":[{"message":{"role":"assistant","content":null,"refusal":"I can't help with that."}}]})"));
  CHECK(r.http_status == 200);
  CHECK(r.explicit_refusal);
  const auto parts = chat_reply_from_body(json::parse(
      R"({"choices":[{"message":{"content":[{"type":"text","text":"Probability: "},{"type":"text","text":"40"}]}}]})"));
  CHECK(parts.text == "Probability: 40");
  CHECK(chat_reply_from_body(json::parse(R"({"choices":[]})")).http_status == -1);
}

TEST_CASE("request body") {
  const auto body = chat_request_body(request(4), mock_config());
  CHECK(body.at("model") == "gpt-4-turbo-2024-04-09");
  CHECK_FALSE(body.contains("temperature"));
  CHECK(body.at("messages")[0].at("role") == "system");
  CHECK(body.at("messages")[0].at("content") == std::string(cot_preamble()));
  const auto& user = body.at("messages")[1];
  CHECK(user.at("role") == "user");
  CHECK(user.at("content")[0].at("text") == std::string(prompt_spec(4).text));
  CHECK(user.at("content")[1].at("image_url").at("url").get<std::string>().starts_with("data:image/png;base64,"));
}

TEST_CASE("retries with backoff") {
  ScriptedProvider provider;
  provider.script("s", 1, 1, {{503, ""}, {429, ""}, {0, ""}, {200, "no"}});
  ResponseCache cache;
  SleepLog sleeps;
  LlmClient client(mock_config(), provider, cache, sleeps.options());
  const auto r = client.query(request(), {"s", 1, 1});
  CHECK(r.status == ResponseStatus::ok);
  CHECK(provider.calls() == 4);
  REQUIRE(sleeps.seconds.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const double nominal = std::pow(2.0, static_cast<double>(i));
    CHECK(sleeps.seconds[i] >= 0.8 * nominal);
    CHECK(sleeps.seconds[i] <= 1.2 * nominal);
  }
  CHECK(cache.record_count() == 1);
}

TEST_CASE("backoff cap") {
  BackoffPolicy b;
  CHECK(b.delay(1, 0.5).count() == doctest::Approx(1.0));
  CHECK(b.delay(3, 0.5).count() == doctest::Approx(4.0));
  CHECK(b.delay(20, 0.999).count() <= 60.0);
  CHECK(b.delay(2, 0.0).count() == doctest::Approx(1.6));
}

TEST_CASE("exhaustion is persisted and retried on the next run") {
  ScriptedProvider provider;
  provider.script("s", 1, 1, {{500, ""}, {500, ""}, {500, ""}, {200, "yes"}});
  ResponseCache cache;
  SleepLog sleeps;
  LlmClient client(mock_config(4, 2), provider, cache, sleeps.options());
  try {
    client.query(request(), {"s", 1, 1});
    FAIL("expected TransportExhausted");
  } catch (const TransportExhausted& e) {
    CHECK(e.record.status == ResponseStatus::transport_error);
  }
  CHECK(provider.calls() == 3);
  REQUIRE(cache.lookup({"s", 1, 1}));
  CHECK(cache.lookup({"s", 1, 1})->status == ResponseStatus::transport_error);

  CHECK(client.query(request(), {"s", 1, 1}).status == ResponseStatus::ok);
  CHECK(provider.calls() == 4);
  CHECK(cache.record_count() == 2);
}

TEST_CASE("auth and client errors are not retried") {
  ScriptedProvider provider;
  provider.script("a", 1, 1, {{401, ""}});
  provider.script("b", 1, 1, {{400, ""}});
  ResponseCache cache;
  SleepLog sleeps;
  LlmClient client(mock_config(), provider, cache, sleeps.options());
  CHECK_THROWS_AS(client.query(request(), {"a", 1, 1}), AuthError);
  CHECK(provider.calls() == 1);
  CHECK_THROWS_AS(client.query(request(), {"b", 1, 1}), TransportExhausted);
  CHECK(provider.calls() == 2);
  CHECK(sleeps.seconds.empty());
}

TEST_CASE("changed request invalidates the cached answer") {
  ScriptedProvider provider;
  provider.script(std::nullopt, 1, std::nullopt, {{200, "yes"}});
  ResponseCache cache;
  SleepLog sleeps;
  auto cfg = mock_config();
  {
    LlmClient client(cfg, provider, cache, sleeps.options());
    client.query(request(), {"s", 1, 1});
  }
  cfg.temperature = 1.0;
  LlmClient warmer(cfg, provider, cache, sleeps.options());
  warmer.query(request(), {"s", 1, 1});
  CHECK(provider.calls() == 2);
}

TEST_CASE("run_batch counts, concurrency and idempotence") {
  testing::TempDir dir;
  const auto manifest = load_manifest(testing::write_manifest(dir.path(), testing::protocol_rows(100, 100, 50)));

  SUBCASE("400 x 8 x 5") {
    ScriptedProvider provider;
    provider.script(std::nullopt, std::nullopt, std::nullopt, {{200, "yes"}});
    ResponseCache cache;
    SleepLog sleeps;
    LlmClient client(mock_config(4), provider, cache, sleeps.options());
    const std::vector<int> prompts = {1, 2, 3, 4, 5, 6, 7, 8};
    const auto r = run_batch(manifest, prompts, 5, client);
    CHECK(cache.record_count() == 16000);
    CHECK(cache.latest().size() == 16000);
    CHECK(r.ok + r.refusal + r.transport_error == 16000);
    CHECK(provider.calls() == 16000);
    const auto again = run_batch(manifest, prompts, 5, client);
    CHECK(again.cached == 16000);
    CHECK(provider.calls() == 16000);
  }

  SUBCASE("bounded in-flight requests") {
    ScriptedProvider provider;
    provider.script(std::nullopt, std::nullopt, std::nullopt, {{200, "yes"}});
    provider.set_latency(2ms);
    ResponseCache cache;
    SleepLog sleeps;
    LlmClient client(mock_config(3), provider, cache, sleeps.options());
    const std::vector<int> prompts = {1};
    run_batch(manifest, prompts, 1, client);
    CHECK(provider.max_in_flight() <= 3);
    CHECK(provider.max_in_flight() >= 2);
  }

  SUBCASE("resumable file cache") {
    ScriptedProvider provider;
    provider.script(std::nullopt, 4, std::nullopt, {{200, "Probability: 30"}});
    provider.script("b001", 4, 2, {{503, ""}});
    const auto path = dir / "out/responses.jsonl";
    std::filesystem::create_directories(path.parent_path());
    SleepLog sleeps;
    const std::vector<int> prompts = {4};
    {
      ResponseCache cache(path);
      LlmClient client(mock_config(4, 1), provider, cache, sleeps.options());
      const auto r = run_batch(manifest, prompts, 2, client);
      CHECK(r.transport_error == 1);
      CHECK(r.failures.size() == 1);
    }
    const auto first = testing::read_file(path);
    const auto calls = provider.calls();
    {
      ResponseCache cache(path);
      CHECK(cache.record_count() == 800);
      LlmClient client(mock_config(4, 1), provider, cache, sleeps.options());
      const auto r = run_batch(manifest, prompts, 2, client);
      CHECK(r.cached == 799);
    }
    // Only the failed key went back to the provider.
    CHECK(provider.calls() == calls + 2);

    provider.script("b001", 4, 2, {{200, "Probability: 31"}});
    {
      ResponseCache cache(path);
      LlmClient client(mock_config(4, 1), provider, cache, sleeps.options());
      run_batch(manifest, prompts, 2, client);
      CHECK(cache.lookup({"b001", 4, 2})->text == "Probability: 31");
    }
    const auto settled = testing::read_file(path);
    {
      ResponseCache cache(path);
      LlmClient client(mock_config(4, 1), provider, cache, sleeps.options());
      const auto r = run_batch(manifest, prompts, 2, client);
      CHECK(r.cached == 800);
    }
    CHECK(testing::read_file(path) == settled);
    CHECK(strip_timestamps(settled).starts_with(strip_timestamps(first)));

    // Every line parses and its hash matches a fresh computation.
    ResponseCache cache(path);
    for (const auto& rec : cache.latest()) {
      const auto* s = manifest.find(rec.key.sample_id);
      REQUIRE(s);
      CHECK(rec.request_hash == request_hash(build_request(manifest, *s, 4), mock_config(4, 1)));
    }
  }
}

TEST_CASE("corrupt cache") {
  testing::TempDir dir;
  testing::write_file(dir / "c.jsonl", "{\"not\": \"a record\"}\n");
  CHECK_THROWS_AS(ResponseCache(dir / "c.jsonl"), CacheCorrupt);
}

TEST_CASE("mock script file") {
  testing::TempDir dir;
  testing::write_file(dir / "s.jsonl",
                      "{\"prompt_id\": 4, \"reply\": \"Probability: 10\"}\n"
                      "{\"sample_id\": \"x\", \"prompt_id\": 4, \"round\": 2, \"replies\": "
                      "[{\"status\": 503}, {\"reply\": \"20\"}]}\n");
  auto provider = ScriptedProvider::from_jsonl(dir / "s.jsonl");
  const auto cfg = mock_config();
  CHECK(provider->complete(request(4), {"y", 4, 1}, cfg).text == "Probability: 10");
  CHECK(provider->complete(request(4), {"x", 4, 2}, cfg).http_status == 503);
  CHECK(provider->complete(request(4), {"x", 4, 2}, cfg).text == "20");
  CHECK(provider->complete(request(4), {"x", 4, 2}, cfg).text == "20");
  CHECK(provider->complete(request(1), {"x", 1, 1}, cfg).http_status == 400);
}

TEST_CASE("HTTP round trip through the mock server") {
  ScriptedProvider scripted;
  scripted.reply("m001", 1, 1, "yes");
  scripted.script(std::nullopt, 4, std::nullopt, {{200, "Probability: 64"}});
  MockChatServer server(scripted);
  server.require_api_key("secret");
  const int port = server.start();

  ProviderConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.request_timeout = 10;
  ResponseCache cache;
  SleepLog sleeps;

  HttpChatProvider http("secret");
  LlmClient client(cfg, http, cache, sleeps.options());
  CHECK(client.query(request(1), {"m001", 1, 1}).text == "yes");
  CHECK(client.query(request(4), {"z", 4, 3}).text == "Probability: 64");
  CHECK(server.requests() == 2);

  HttpChatProvider wrong("nope");
  LlmClient rejected(cfg, wrong, cache, sleeps.options());
  CHECK_THROWS_AS(rejected.query(request(4), {"z", 4, 4}), AuthError);
  server.stop();

  // Nothing listening: connection failures are retried then persisted.
  auto dead = cfg;
  dead.max_retries = 1;
  LlmClient offline(dead, http, cache, sleeps.options());
  CHECK_THROWS_AS(offline.query(request(4), {"z", 4, 5}), TransportExhausted);
  CHECK(sleeps.seconds.size() == 1);
}
