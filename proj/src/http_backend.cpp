#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <thread>

#include "dwim/engine.hpp"

namespace dwim::engine {

void HttpConfig::validate() const {
  if (base_url.empty()) throw UsageError("http backend needs a base URL");
  if (model.empty()) throw UsageError("http backend needs a model name");
  if (!(temperature >= 0.0)) throw UsageError("temperature must be non-negative");
  if (max_tokens < 1) throw UsageError("max_tokens must be positive");
  if (retries < 0) throw UsageError("retries must be non-negative");
}

HttpChatBackend::HttpChatBackend(HttpConfig config) : config_(std::move(config)) { config_.validate(); }

nlohmann::json HttpChatBackend::request_body(std::string_view prompt) const {
  return nlohmann::json{{"model", config_.model},
                        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                        {"temperature", config_.temperature},
                        {"max_tokens", config_.max_tokens}};
}

std::string HttpChatBackend::next_turn(std::string_view prompt) {
  if (prompt.empty()) throw UsageError("prompt must not be empty");
  httplib::Client client(config_.base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto body = request_body(prompt).dump();

  std::string last_error;
  auto delay = config_.backoff;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    auto res = client.Post(config_.path, headers, body, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "server returned HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw BackendUnavailable("server returned HTTP " + std::to_string(res->status));
    const auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw BackendUnavailable("response is not JSON");
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw BackendUnavailable("response lacks choices[0].message.content");
    }
  }
  throw BackendUnavailable(last_error + " after " + std::to_string(config_.retries + 1) + " attempts");
}

}  // namespace dwim::engine
