#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tmagent {

/// Throws std::runtime_error naming the path when the file cannot be read.
std::string read_text_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames it into place.
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF rows.
/// Blank lines are dropped.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

std::string trim(std::string_view s);

}  // namespace tmagent
