#include "tmagent/ids.hpp"

#include <cctype>

namespace tmagent::id_rules {
namespace {

bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }
bool is_upper(char c) noexcept { return c >= 'A' && c <= 'Z'; }

// Consumes a run of digits starting at `pos`; returns the run length.
std::size_t digit_run(std::string_view s, std::size_t pos) noexcept {
  std::size_t n = 0;
  while (pos + n < s.size() && is_digit(s[pos + n])) ++n;
  return n;
}

}  // namespace

bool is_attack_technique(std::string_view s) noexcept {
  if (s.size() != 5 && s.size() != 9) return false;
  if (s[0] != 'T' || digit_run(s, 1) != 4) return false;
  if (s.size() == 5) return true;
  return s[5] == '.' && digit_run(s, 6) == 3;
}

bool is_cve(std::string_view s) noexcept {
  constexpr std::string_view prefix = "CVE-";
  if (s.substr(0, prefix.size()) != prefix) return false;
  std::size_t pos = prefix.size();
  if (digit_run(s, pos) != 4) return false;
  pos += 4;
  if (pos >= s.size() || s[pos] != '-') return false;
  ++pos;
  const std::size_t tail = digit_run(s, pos);
  return tail >= 4 && tail <= 7 && pos + tail == s.size();
}

bool is_nist_control(std::string_view s) noexcept {
  if (s.size() < 4 || !is_upper(s[0]) || !is_upper(s[1]) || s[2] != '-') return false;
  std::size_t pos = 3;
  const std::size_t base = digit_run(s, pos);
  if (base < 1 || base > 2) return false;
  pos += base;
  if (pos == s.size()) return true;
  if (s[pos] != '(') return false;
  ++pos;
  const std::size_t enhancement = digit_run(s, pos);
  if (enhancement == 0) return false;
  pos += enhancement;
  return pos + 1 == s.size() && s[pos] == ')';
}

}  // namespace tmagent::id_rules
