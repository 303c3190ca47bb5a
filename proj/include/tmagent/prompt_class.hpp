#pragma once

#include <optional>
#include <string_view>

namespace tmagent {

/// How much of the system the request spells out: components and their
/// interactions (Simple), components only (Compound), or just the system name
/// (Complex).
enum class PromptClass { Simple, Compound, Complex };

constexpr std::string_view to_token(PromptClass c) {
  switch (c) {
    case PromptClass::Simple: return "simple";
    case PromptClass::Compound: return "compound";
    case PromptClass::Complex: return "complex";
  }
  return "";
}

constexpr std::optional<PromptClass> prompt_class_from_token(std::string_view t) {
  if (t == "simple") return PromptClass::Simple;
  if (t == "compound") return PromptClass::Compound;
  if (t == "complex") return PromptClass::Complex;
  return std::nullopt;
}

}  // namespace tmagent
