#pragma once

// Pulls the threat model out of raw provider output and classifies anything
// that is not a clean single contract block, so the agent can decide between
// a repair round and giving up.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "tmagent/model.hpp"

namespace tmagent {

/// A format problem the provider can plausibly fix when told about it.
struct FormatFailure {
  std::string detail;  // never empty
  std::optional<std::size_t> offset;
};

struct Parsed {
  ThreatModel model;
};

struct Repairable {
  FormatFailure failure;
};

struct Unrepairable {
  std::string reason;
};

using ExtractionResult = std::variant<Parsed, Repairable, Unrepairable>;

inline constexpr std::size_t kMaxRawBytes = 1u << 20;

ExtractionResult extract_model(std::string_view raw);

}  // namespace tmagent
