#include <stdexcept>

#include "tmagent/config.hpp"
#include "tmagent/provider.hpp"

#include "httplib.h"

namespace tmagent {

using json = nlohmann::json;

namespace {

void split_url(std::string_view url, std::string& scheme_host_port, std::string& path) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ConfigInvalid("provider.endpoint must be an absolute URL");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigInvalid("provider.endpoint must use http or https");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string_view::npos) {
    scheme_host_port = std::string(url);
    path = "/";
  } else {
    scheme_host_port = std::string(url.substr(0, path_start));
    path = std::string(url.substr(path_start));
  }
  if (scheme_host_port.size() <= scheme_end + 3) throw ConfigInvalid("provider.endpoint has no host");
}

}  // namespace

RemoteProvider::RemoteProvider(RemoteConfig config, std::shared_ptr<Clock> clock)
    : config_(std::move(config)), clock_(std::move(clock)) {
  if (config_.api_key.empty()) {
    throw ConfigInvalid("remote provider needs an API key in " + std::string(kApiKeyEnv));
  }
  if (config_.retries < 0) throw ConfigInvalid("provider.retries must be non-negative");
  if (config_.deadline.count() <= 0) throw ConfigInvalid("provider.deadline_s must be positive");
  if (!clock_) throw std::invalid_argument("remote provider needs a clock");
  split_url(config_.endpoint, scheme_host_port_, path_);
}

std::string RemoteProvider::request_body(std::string_view prompt) {
  json body;
  body["contents"] = json::array({{{"role", "user"}, {"parts", json::array({{{"text", std::string(prompt)}}})}}});
  return body.dump();
}

std::optional<std::string> RemoteProvider::response_text(std::string_view body) {
  const auto doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  const auto candidates = doc.find("candidates");
  if (candidates == doc.end() || !candidates->is_array() || candidates->empty()) return std::nullopt;
  const auto& first = (*candidates)[0];
  if (!first.contains("content") || !first["content"].contains("parts")) return std::nullopt;
  const auto& parts = first["content"]["parts"];
  if (!parts.is_array()) return std::nullopt;
  std::string text;
  bool any = false;
  for (const auto& p : parts) {
    if (p.is_object() && p.contains("text") && p["text"].is_string()) {
      text += p["text"].get<std::string>();
      any = true;
    }
  }
  if (!any) return std::nullopt;
  return text;
}

ProviderExchange RemoteProvider::complete(std::string_view prompt) {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");

  const auto body = request_body(prompt);
  const auto call_start = clock_->monotonic();
  const int max_attempts = config_.retries + 1;
  std::string last_error;

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) clock_->sleep_for(config_.backoff * (1 << (attempt - 2)));
    const auto elapsed = clock_->monotonic() - call_start;
    if (elapsed >= config_.deadline) {
      throw ProviderError(ProviderErrorKind::Timeout, attempt - 1, "deadline exceeded before attempt " + std::to_string(attempt));
    }
    const auto remaining = config_.deadline - elapsed;

    httplib::Client client(scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(remaining);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(remaining - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    const httplib::Headers headers = {{"x-goog-api-key", config_.api_key}};

    const auto attempt_start = clock_->monotonic();
    auto res = client.Post(path_, headers, body, "application/json");
    const auto latency = clock_->monotonic() - attempt_start;

    if (!res) {
      last_error = httplib::to_string(res.error());
      if (clock_->monotonic() - call_start >= config_.deadline) {
        throw ProviderError(ProviderErrorKind::Timeout, attempt, last_error);
      }
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderError(ProviderErrorKind::RemoteRefusal, attempt, "HTTP status " + std::to_string(res->status),
                          res->body);
    }
    auto text = response_text(res->body);
    if (!text) {
      throw ProviderError(ProviderErrorKind::RemoteRefusal, attempt, "response carries no candidate text", res->body);
    }

    ProviderExchange x;
    x.request_text = std::string(prompt);
    x.response_text = std::move(*text);
    x.latency_ms = latency.count();
    x.attempt = attempt;
    x.provider_name = name();
    x.completed_at = clock_->wall_now();
    return x;
  }
  throw ProviderError(ProviderErrorKind::Exhausted, max_attempts, last_error);
}

}  // namespace tmagent
