#include "tmagent/config.hpp"

#include <charconv>
#include <cstdlib>

#include "tmagent/io.hpp"

namespace tmagent {

Settings Settings::parse(std::string_view text) {
  Settings s;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigInvalid("config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(std::string_view(line).substr(0, eq));
    auto value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigInvalid("config line " + std::to_string(line_no) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    s.values_[key] = value;
    if (end == text.size()) break;
  }
  return s;
}

Settings Settings::load(const std::filesystem::path& file) {
  try {
    return parse(read_text_file(file));
  } catch (const ConfigInvalid& e) {
    throw ConfigInvalid(file.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigInvalid(e.what());
  }
}

std::optional<std::string> Settings::get(std::string_view key) const {
  auto it = values_.find(std::string(key));
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Settings::get_or(std::string_view key, std::string fallback) const {
  auto v = get(key);
  return v ? *v : std::move(fallback);
}

long long Settings::get_int(std::string_view key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  long long out = 0;
  const auto* first = v->data();
  const auto* last = v->data() + v->size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigInvalid("config key " + std::string(key) + ": '" + *v + "' is not an integer");
  }
  return out;
}

std::optional<std::string> env_value(std::string_view name) {
  const char* v = std::getenv(std::string(name).c_str());
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

}  // namespace tmagent
