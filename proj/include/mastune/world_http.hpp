#pragma once

// Live backend speaking a chat-completion style JSON protocol over HTTP.
// Call quality is only the presence of the task's answer tag in the reply,
// which is not a node-level grade, so node rewards are reported unobservable.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

// Eigen must be parsed before httplib: <resolv.h> defines a `_res` macro.
#include "mastune/error.hpp"
#include "mastune/world.hpp"

#include <httplib.h>

namespace mastune {

struct HttpBackendConfig {
  std::string url = "http://127.0.0.1:8080/v1/chat";  // scheme://host[:port]/path
  std::string api_key_env = "MASTUNE_API_KEY";
  int timeout_seconds = 30;
  int retries = 2;
  int backoff_ms = 200;  // doubled after each failed attempt
  long max_tokens = 512;
};

inline nlohmann::json http_config_to_json(const HttpBackendConfig& c) {
  return {{"kind", "http"},          {"url", c.url},         {"api_key_env", c.api_key_env},
          {"timeout_seconds", c.timeout_seconds}, {"retries", c.retries}, {"backoff_ms", c.backoff_ms},
          {"max_tokens", c.max_tokens}};
}

inline HttpBackendConfig http_config_from_json(const nlohmann::json& j) {
  HttpBackendConfig c;
  c.url = j.value("url", c.url);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.retries = j.value("retries", c.retries);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  if (c.retries < 0 || c.timeout_seconds <= 0) throw ValidationError("http backend: bad timeout/retry settings");
  return c;
}

// Prompt layout: system = role card, user = query plus upstream outputs.
inline nlohmann::json chat_request_body(const AgentRequest& req, long max_tokens) {
  std::string user = req.task->query_text;
  for (std::size_t i = 0; i < req.inbound_text.size(); ++i)
    user += "\n\n[input " + std::to_string(i + 1) + "]\n" + req.inbound_text[i];
  if (req.position == PositionType::synthesizer && !req.inbound_text.empty())
    user += "\n\nCombine the inputs above into one final answer.";
  return {{"model", req.model->model_id},
          {"messages", nlohmann::json::array({{{"role", "system"}, {"content", req.role->name + ": " + req.role->description}},
                                              {{"role", "user"}, {"content", user}}})},
          {"max_tokens", max_tokens}};
}

class HttpBackend final : public AgentBackend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme = cfg_.url.find("://");
    const auto slash = cfg_.url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    base_ = slash == std::string::npos ? cfg_.url : cfg_.url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : cfg_.url.substr(slash);
    client_ = std::make_unique<httplib::Client>(base_);
    client_->set_connection_timeout(cfg_.timeout_seconds);
    client_->set_read_timeout(cfg_.timeout_seconds);
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
      client_->set_bearer_token_auth(key);
  }

  AgentOutput invoke(const AgentRequest& req, Rng&) const override {
    if (req.model->is_skip) throw ValidationError("http backend: the skip token cannot be invoked");
    const std::string body = chat_request_body(req, cfg_.max_tokens).dump();
    std::lock_guard lock(mu_);
    std::string last_error;
    int wait = cfg_.backoff_ms;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(wait));
        wait *= 2;
      }
      auto res = client_->Post(path_, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status < 500 && res->status != 429) break;
        continue;
      }
      try {
        const auto j = nlohmann::json::parse(res->body);
        AgentOutput out;
        out.text = j.at("content").get<std::string>();
        out.tokens_in = j.at("usage").at("prompt_tokens").get<long>();
        out.tokens_out = j.at("usage").at("completion_tokens").get<long>();
        out.quality = !req.task->ground_truth_tag.empty() &&
                              out.text.find(req.task->ground_truth_tag) != std::string::npos
                          ? 1.0
                          : 0.0;
        return out;
      } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("http backend: malformed response: ") + ex.what());
      }
    }
    throw Error("http backend: request to " + cfg_.url + " failed: " + last_error);
  }

  bool quality_observable() const override { return false; }
  bool concurrent_safe() const override { return false; }

 private:
  HttpBackendConfig cfg_;
  std::string base_;
  std::string path_;
  std::unique_ptr<httplib::Client> client_;
  mutable std::mutex mu_;
};

}  // namespace mastune
