#pragma once

#include <compare>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tmagent {

class InvalidId : public std::invalid_argument {
 public:
  InvalidId(std::string_view kind, std::string_view token)
      : std::invalid_argument("invalid " + std::string(kind) + ": '" + std::string(token) + "'") {}
};

namespace id_rules {

// T + 4 digits, optionally followed by '.' + 3 digits (sub-technique).
bool is_attack_technique(std::string_view s) noexcept;
// CVE- + 4-digit year + '-' + 4..7 digits.
bool is_cve(std::string_view s) noexcept;
// Two uppercase letters + '-' + 1..2 digits, optionally '(' digits ')'.
bool is_nist_control(std::string_view s) noexcept;

}  // namespace id_rules

/// A framework identifier whose textual form has been checked against the
/// pattern of its kind. Instances can only be created through `parse`.
template <class Rule>
class FrameworkId {
 public:
  static FrameworkId parse(std::string_view token) {
    if (!Rule::matches(token)) throw InvalidId(Rule::kind, token);
    return FrameworkId(std::string(token));
  }

  static bool matches(std::string_view token) noexcept { return Rule::matches(token); }

  const std::string& str() const noexcept { return value_; }

  friend bool operator==(const FrameworkId&, const FrameworkId&) = default;
  friend auto operator<=>(const FrameworkId&, const FrameworkId&) = default;

 private:
  explicit FrameworkId(std::string value) : value_(std::move(value)) {}
  std::string value_;
};

struct AttackTechniqueRule {
  static constexpr std::string_view kind = "ATT&CK technique id";
  static bool matches(std::string_view s) noexcept { return id_rules::is_attack_technique(s); }
};

struct CveRule {
  static constexpr std::string_view kind = "CVE id";
  static bool matches(std::string_view s) noexcept { return id_rules::is_cve(s); }
};

struct NistControlRule {
  static constexpr std::string_view kind = "NIST control id";
  static bool matches(std::string_view s) noexcept { return id_rules::is_nist_control(s); }
};

using AttackTechniqueId = FrameworkId<AttackTechniqueRule>;
using CveId = FrameworkId<CveRule>;
using NistControlId = FrameworkId<NistControlRule>;

}  // namespace tmagent
