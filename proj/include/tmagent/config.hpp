#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tmagent {

class ConfigInvalid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kApiKeyEnv = "THREATGPT_API_KEY";
inline constexpr std::string_view kServiceTokenEnv = "THREATGPT_SERVICE_TOKEN";

/// Flat `key = value` settings. Lines starting with `#` are comments; values
/// may be wrapped in double quotes.
class Settings {
 public:
  static Settings parse(std::string_view text);
  static Settings load(const std::filesystem::path& file);

  void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }
  std::optional<std::string> get(std::string_view key) const;
  std::string get_or(std::string_view key, std::string fallback) const;
  long long get_int(std::string_view key, long long fallback) const;  // ConfigInvalid if not an integer
  bool contains(std::string_view key) const { return values_.count(std::string(key)) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::optional<std::string> env_value(std::string_view name);

}  // namespace tmagent
