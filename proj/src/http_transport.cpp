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

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <thread>

#include "zsmad/llm_client.hpp"

namespace zsmad {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

SplitUrl split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("bad base_url '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = url;
  } else {
    out.scheme_host_port = url.substr(0, path_start);
    out.path_prefix = url.substr(path_start);
  }
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

json error_body(const std::string& message) {
  return {{"error", {{"message", message}, {"type", "mock_error"}}}};
}

}  // namespace

HttpChatProvider::HttpChatProvider(std::string api_key) : api_key_(std::move(api_key)) {}

ChatReply HttpChatProvider::complete(const RequestMessages& request, const QueryKey& key,
                                     const ProviderConfig& config) {
  const auto url = split_base_url(config.base_url);
  httplib::Client client(url.scheme_host_port);
  const auto secs = static_cast<time_t>(config.request_timeout);
  const auto usecs = static_cast<time_t>((config.request_timeout - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers = {
      {"X-Sample-Id", key.sample_id},
      {"X-Prompt-Id", std::to_string(key.prompt_id)},
      {"X-Round", std::to_string(key.round)},
  };
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  const auto body = chat_request_body(request, config).dump();
  auto res = client.Post(url.path_prefix + "/chat/completions", headers, body, "application/json");

  ChatReply reply;
  if (!res) {
    reply.http_status = 0;
    reply.error = "transport: " + httplib::to_string(res.error());
    return reply;
  }
  if (res->status != 200) {
    reply.http_status = res->status;
    reply.error = "HTTP " + std::to_string(res->status);
    return reply;
  }
  try {
    return chat_reply_from_body(json::parse(res->body));
  } catch (const json::exception& e) {
    reply.http_status = -1;
    reply.error = std::string("malformed completion body: ") + e.what();
    return reply;
  }
}

struct MockChatServer::Impl {
  ScriptedProvider& provider;
  httplib::Server server;
  std::thread thread;
  std::string required_key;
  explicit Impl(ScriptedProvider& p) : provider(p) {}
};

MockChatServer::MockChatServer(ScriptedProvider& provider)
    : impl_(std::make_unique<Impl>(provider)) {
  impl_->server.Post(R"((.*)/chat/completions)", [this](const httplib::Request& req,
                                                        httplib::Response& res) {
    ++requests_;
    if (!impl_->required_key.empty() &&
        req.get_header_value("Authorization") != "Bearer " + impl_->required_key) {
      res.status = 401;
      res.set_content(error_body("invalid api key").dump(), "application/json");
      return;
    }

    QueryKey key;
    RequestMessages messages;
    ProviderConfig config;
    try {
      key.sample_id = req.get_header_value("X-Sample-Id");
      key.prompt_id = std::stoi(req.get_header_value("X-Prompt-Id"));
      key.round = std::stoi(req.get_header_value("X-Round"));
      const auto body = json::parse(req.body);
      config.model_name = body.at("model").get<std::string>();
      const auto& msgs = body.at("messages");
      messages.system_text = msgs.at(0).at("content").get<std::string>();
      const auto& parts = msgs.at(1).at("content");
      messages.user_text = parts.at(0).at("text").get<std::string>();
      const auto url = parts.at(1).at("image_url").at("url").get<std::string>();
      if (!url.starts_with("data:image/png;base64,") &&
          !url.starts_with("data:image/jpeg;base64,")) {
        throw std::invalid_argument("image must be an inline PNG/JPEG data URL");
      }
      if (messages.user_text != prompt_spec(key.prompt_id).text) {
        throw std::invalid_argument("user text does not match prompt " +
                                    std::to_string(key.prompt_id));
      }
      messages.prompt_id = key.prompt_id;
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(error_body(e.what()).dump(), "application/json");
      return;
    }

    const auto reply = impl_->provider.complete(messages, key, config);
    if (reply.http_status != 200) {
      res.status = reply.http_status > 0 ? reply.http_status : 500;
      res.set_content(error_body(reply.error).dump(), "application/json");
      return;
    }
    const json out = {
        {"id", "mock-" + key.sample_id + "-" + std::to_string(key.prompt_id) + "-" +
                   std::to_string(key.round)},
        {"object", "chat.completion"},
        {"model", config.model_name},
        {"choices", json::array({{{"index", 0},
                                  {"message", {{"role", "assistant"}, {"content", reply.text}}},
                                  {"finish_reason", "stop"}}})},
    };
    res.status = 200;
    res.set_content(out.dump(), "application/json");
  });
}

MockChatServer::~MockChatServer() { stop(); }

void MockChatServer::require_api_key(std::string key) { impl_->required_key = std::move(key); }

int MockChatServer::start(const std::string& host, int port) {
  const int bound =
      port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("mock server: cannot bind " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void MockChatServer::listen_blocking(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw std::runtime_error("mock server: cannot listen on " + host + ":" + std::to_string(port));
  }
}

void MockChatServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace zsmad
