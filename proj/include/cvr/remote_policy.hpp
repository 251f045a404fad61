#pragma once

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "cvr/policy.hpp"

namespace cvr {

inline constexpr const char* kApiKeyEnv = "CVR_API_KEY";

// Chat-completion endpoint settings. The key is never part of the config: it
// is read from CVR_API_KEY when the policy is built.
struct RemotePolicyConfig {
  std::string endpoint = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "master-agent";
  double temperature = 0.0;
  int max_tokens = 8192;
  double timeout_s = 60;
  int retries = 3;  // transport retries after the first request
  double backoff_base_s = 0.5;
  int max_in_flight = 4;

  void validate() const {
    if (!(temperature >= 0)) throw Error("remote config: temperature must be >= 0");
    if (max_tokens <= 0) throw Error("remote config: max_tokens must be > 0");
    if (!(timeout_s > 0)) throw Error("remote config: timeout_s must be > 0");
    if (retries < 0) throw Error("remote config: retries must be >= 0");
    if (max_in_flight < 1) throw Error("remote config: max_in_flight must be >= 1");
  }
};

class TransportError : public Error {
 public:
  enum class Kind { timeout, connection, http_status, malformed_body };

  TransportError(Kind kind, std::string message, int status = 0)
      : Error(std::move(message)), kind_(kind), status_(status) {}
  Kind kind() const { return kind_; }
  int status() const { return status_; }

 private:
  Kind kind_;
  int status_;
};

namespace detail {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  const auto path_at = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_at == std::string::npos) return {url, "/"};
  return {url.substr(0, path_at), url.substr(path_at)};
}

inline json chat_request(const RemotePolicyConfig& cfg, std::string_view system,
                         std::string_view user) {
  return {{"model", cfg.model},
          {"messages",
           json::array({{{"role", "system"}, {"content", std::string(system)}},
                        {{"role", "user"}, {"content", std::string(user)}}})},
          {"temperature", cfg.temperature},
          {"max_tokens", cfg.max_tokens},
          {"stream", false}};
}

inline std::string chat_content(const std::string& body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded())
    throw TransportError(TransportError::Kind::malformed_body, "response body is not JSON");
  try {
    const json& content = doc.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw std::runtime_error("content is not a string");
    return content.get<std::string>();
  } catch (const std::exception& e) {
    throw TransportError(TransportError::Kind::malformed_body,
                         std::string("unexpected response shape: ") + e.what());
  }
}

}  // namespace detail

struct RemoteCallStats {
  int requests = 0;  // HTTP requests issued, retries included
  std::vector<double> latencies_s;
};

// One chat completion: system = task prompt, user = rendered state. Retries
// 5xx, timeouts, and connection failures with exponential backoff; other
// failures surface immediately as TransportError.
inline std::string remote_policy_decide(const RemotePolicyConfig& cfg, std::string_view system,
                                        std::string_view user, const std::string& api_key = {},
                                        RemoteCallStats* stats = nullptr) {
  cfg.validate();
  const auto ep = detail::split_endpoint(cfg.endpoint);
  httplib::Client client(ep.base);
  const auto timeout = std::chrono::duration<double>(cfg.timeout_s);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout).count();
  client.set_connection_timeout(usec / 1000000, usec % 1000000);
  client.set_read_timeout(usec / 1000000, usec % 1000000);
  client.set_write_timeout(usec / 1000000, usec % 1000000);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  const std::string body = detail::chat_request(cfg, system, user).dump();

  std::optional<TransportError> last;
  for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
    if (attempt > 0) {
      const double wait = cfg.backoff_base_s * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto res = client.Post(ep.path, headers, body, "application/json");
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (stats) {
      ++stats->requests;
      stats->latencies_s.push_back(elapsed);
    }
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             (err == httplib::Error::Read && elapsed >= 0.9 * cfg.timeout_s);
      last = TransportError(timed_out ? TransportError::Kind::timeout
                                      : TransportError::Kind::connection,
                            fmt::format("request failed: {}", httplib::to_string(err)));
      continue;
    }
    if (res->status >= 500) {
      last = TransportError(TransportError::Kind::http_status,
                            fmt::format("server returned status {}", res->status), res->status);
      continue;
    }
    if (res->status != 200)
      throw TransportError(TransportError::Kind::http_status,
                           fmt::format("server returned status {}", res->status), res->status);
    return detail::chat_content(res->body);
  }
  throw *last;
}

// Policy backed by a chat-completion server. Safe for concurrent use up to
// max_in_flight simultaneous requests.
class RemotePolicy final : public Policy {
 public:
  explicit RemotePolicy(RemotePolicyConfig config)
      : config_(std::move(config)), in_flight_(config_.max_in_flight) {
    config_.validate();
    if (const char* key = std::getenv(kApiKeyEnv)) api_key_ = key;
  }

  Decision decide(const DecisionContext& ctx, Rng&) override {
    in_flight_.acquire();
    RemoteCallStats local;
    try {
      auto text = remote_policy_decide(config_, ctx.system_prompt, ctx.conversation, api_key_, &local);
      record(local);
      in_flight_.release();
      return {std::move(text), std::nullopt};
    } catch (...) {
      record(local);
      in_flight_.release();
      throw;
    }
  }

  Concurrency concurrency() const override { return Concurrency::concurrent_ok; }

  RemoteCallStats stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
  }

 private:
  void record(const RemoteCallStats& s) {
    std::lock_guard lock(mutex_);
    stats_.requests += s.requests;
    stats_.latencies_s.insert(stats_.latencies_s.end(), s.latencies_s.begin(), s.latencies_s.end());
  }

  RemotePolicyConfig config_;
  std::string api_key_;
  std::counting_semaphore<1024> in_flight_;
  mutable std::mutex mutex_;
  RemoteCallStats stats_;
};

}  // namespace cvr
