#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace tmagent {

using Timestamp = std::chrono::sys_seconds;
using TimestampMs = std::chrono::sys_time<std::chrono::milliseconds>;

/// "2025-03-01T12:00:00Z"
std::string format_rfc3339(Timestamp t);
/// "2025-03-01T12:00:00.250Z"
std::string format_rfc3339_ms(TimestampMs t);

/// Accepts `Z` or a numeric `+hh:mm` / `-hh:mm` offset; fractional seconds are
/// truncated. Returns nullopt on anything else.
std::optional<Timestamp> parse_rfc3339(std::string_view text);
std::optional<TimestampMs> parse_rfc3339_ms(std::string_view text);

}  // namespace tmagent
