//
// Copyright 2026 The sqlharness Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Chat-completions client over HTTP.
//
// Request:  POST <endpoint> {model, messages[{role, content}], temperature,
//           top_p, max_tokens, seed?}
// Response: the assistant text is read at a JSON pointer, by default
//           /choices/0/message/content.

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "httplib.h"
#include "json.hpp"
#include "sqlharness/policy.hpp"

namespace sqlharness {

struct RemoteConfig {
  std::string endpoint;  // full URL, e.g. http://localhost:8000/v1/chat/completions
  std::string api_key;
  std::string model;
  std::string response_pointer = "/choices/0/message/content";
  std::chrono::milliseconds timeout{120'000};
  int max_in_flight = 8;

  // SQLHARNESS_ENDPOINT, SQLHARNESS_API_KEY, SQLHARNESS_MODEL fill empty fields.
  static RemoteConfig from_env() { return from_env(RemoteConfig{}); }
  static RemoteConfig from_env(RemoteConfig base) {
    auto env = [](const char* name) -> std::string {
      const char* v = std::getenv(name);
      return v ? v : "";
    };
    if (base.endpoint.empty()) base.endpoint = env("SQLHARNESS_ENDPOINT");
    if (base.api_key.empty()) base.api_key = env("SQLHARNESS_API_KEY");
    if (base.model.empty()) base.model = env("SQLHARNESS_MODEL");
    return base;
  }
};

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

inline ParsedUrl parse_endpoint_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ConfigError("endpoint URL needs a scheme: '" + std::string(url) + "'");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme '" + std::string(scheme) + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw ConfigError("https endpoints need a build with OpenSSL support");
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = std::string(url.substr(0, path_start));
  out.path = path_start == std::string_view::npos ? "/" : std::string(url.substr(path_start));
  return out;
}

inline nlohmann::json chat_request_body(const std::string& model, const Dialogue& dialogue, const SamplingConfig& cfg) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : dialogue) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  nlohmann::json body = {{"model", model},
                         {"messages", std::move(messages)},
                         {"temperature", cfg.temperature},
                         {"top_p", cfg.top_p},
                         {"max_tokens", cfg.max_tokens}};
  if (cfg.seed) body["seed"] = *cfg.seed;
  return body;
}

class RemoteChatPolicy final : public Policy {
 public:
  explicit RemoteChatPolicy(RemoteConfig cfg) : cfg_(std::move(cfg)), url_(parse_endpoint_url(cfg_.endpoint)) {
    if (cfg_.max_in_flight < 1) throw ConfigError("remote policy: max_in_flight must be >= 1");
  }

  std::string complete(const Dialogue& dialogue, const SamplingConfig& cfg, std::string_view request_id) override {
    if (dialogue.empty()) throw ContractError("complete: empty dialogue");
    cfg.validate();
    Slot slot(*this);

    httplib::Client client(url_.scheme_host_port);
    client.set_connection_timeout(cfg_.timeout);
    client.set_read_timeout(cfg_.timeout);
    client.set_write_timeout(cfg_.timeout);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    if (!request_id.empty()) headers.emplace("Idempotency-Key", std::string(request_id));

    const auto body = chat_request_body(cfg_.model, dialogue, cfg).dump();
    auto res = client.Post(url_.path, headers, body, "application/json");
    if (!res) throw TransportError("chat endpoint: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
      throw TransportError("chat endpoint returned HTTP " + std::to_string(res->status));
    }
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError(std::string("chat endpoint: response is not JSON: ") + e.what());
    }
    const nlohmann::json::json_pointer ptr(cfg_.response_pointer);
    if (!doc.contains(ptr) || !doc.at(ptr).is_string()) {
      throw ProtocolError("chat endpoint: no string at " + cfg_.response_pointer);
    }
    return doc.at(ptr).get<std::string>();
  }

 private:
  // Caps concurrent requests across all callers of this instance.
  struct Slot {
    explicit Slot(RemoteChatPolicy& p) : p_(p) {
      std::unique_lock lock(p_.mu_);
      p_.cv_.wait(lock, [&] { return p_.in_flight_ < p_.cfg_.max_in_flight; });
      ++p_.in_flight_;
    }
    ~Slot() {
      {
        std::lock_guard lock(p_.mu_);
        --p_.in_flight_;
      }
      p_.cv_.notify_one();
    }
    RemoteChatPolicy& p_;
  };

  RemoteConfig cfg_;
  ParsedUrl url_;
  std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
};

// Sessions share one client so the in-flight cap applies process-wide.
inline PolicyFactory remote_factory(RemoteConfig cfg) {
  auto shared = std::make_shared<RemoteChatPolicy>(std::move(cfg));
  struct Session final : Policy {
    std::shared_ptr<RemoteChatPolicy> client;
    std::string complete(const Dialogue& d, const SamplingConfig& c, std::string_view id) override {
      return client->complete(d, c, id);
    }
  };
  return [shared](std::uint64_t) {
    auto s = std::make_unique<Session>();
    s->client = shared;
    return s;
  };
}

}  // namespace sqlharness
