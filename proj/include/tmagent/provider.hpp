#pragma once

// LLM backends behind one `complete` call: a generate-content HTTP client and
// a scripted replay double. Each call yields a ProviderExchange carrying the
// measured latency and the number of attempts it took.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmagent/clock.hpp"
#include "tmagent/timeutil.hpp"

namespace tmagent {

struct ProviderExchange {
  std::string request_text;
  std::string response_text;
  std::int64_t latency_ms = 0;
  int attempt = 1;
  std::string provider_name;
  TimestampMs completed_at{};
  friend bool operator==(const ProviderExchange&, const ProviderExchange&) = default;
};

nlohmann::ordered_json to_json(const ProviderExchange& x);
ProviderExchange exchange_from_json(const nlohmann::json& doc);

enum class ProviderErrorKind { Timeout, RemoteRefusal, Exhausted };

std::string_view to_token(ProviderErrorKind k);

class ProviderError : public std::runtime_error {
 public:
  ProviderError(ProviderErrorKind kind, int attempts, std::string detail, std::string body = {});

  ProviderErrorKind kind() const noexcept { return kind_; }
  int attempts() const noexcept { return attempts_; }
  const std::string& body() const noexcept { return body_; }

 private:
  ProviderErrorKind kind_;
  int attempts_;
  std::string body_;
};

class Provider {
 public:
  virtual ~Provider() = default;
  /// Throws std::invalid_argument on an empty prompt, ProviderError otherwise.
  virtual ProviderExchange complete(std::string_view prompt) = 0;
  virtual std::string name() const = 0;
};

struct ScriptEntry {
  std::optional<std::string> match;  // fires only if the request contains it
  std::string response;
  std::chrono::milliseconds delay{0};
};

struct Script {
  std::string name;
  std::vector<ScriptEntry> entries;

  /// `{"name": ..., "responses": [{"match"?, "response" | "response_file", "delay_ms"?}]}`;
  /// response files resolve relative to `base_dir`.
  static Script from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static Script load(const std::filesystem::path& file);
};

/// Replays a script in order and never retries. Calls are serialized, so the
/// order entries are consumed in equals call completion order.
class ScriptedProvider final : public Provider {
 public:
  ScriptedProvider(Script script, std::shared_ptr<Clock> clock,
                   std::chrono::milliseconds deadline = std::chrono::seconds(60));

  ProviderExchange complete(std::string_view prompt) override;
  std::string name() const override { return "scripted:" + script_.name; }
  std::size_t consumed() const;

 private:
  Script script_;
  std::shared_ptr<Clock> clock_;
  std::chrono::milliseconds deadline_;
  mutable std::mutex mu_;
  std::size_t cursor_ = 0;
};

struct RemoteConfig {
  std::string endpoint;  // full URL of the generate-content method
  std::string api_key;
  std::chrono::milliseconds deadline = std::chrono::seconds(60);
  int retries = 2;
  std::chrono::milliseconds backoff = std::chrono::seconds(1);  // doubles per retry
};

/// Generate-content style client: one text part in, the first candidate's
/// text out. Transport failures are retried with exponential backoff;
/// non-success statuses are not.
class RemoteProvider final : public Provider {
 public:
  RemoteProvider(RemoteConfig config, std::shared_ptr<Clock> clock);

  ProviderExchange complete(std::string_view prompt) override;
  std::string name() const override { return "remote"; }

  static std::string request_body(std::string_view prompt);
  /// Concatenated text parts of the first candidate; nullopt if absent.
  static std::optional<std::string> response_text(std::string_view body);

 private:
  RemoteConfig config_;
  std::shared_ptr<Clock> clock_;
  std::string scheme_host_port_;
  std::string path_;
};

inline constexpr std::string_view kDefaultEndpoint =
    "https://generativelanguage.googleapis.com/v1beta/models/gemini-1.5-flash:generateContent";

}  // namespace tmagent
