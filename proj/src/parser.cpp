#include "tmagent/parser.hpp"

#include <vector>

#include "tmagent/contract.hpp"
#include "tmagent/io.hpp"

namespace tmagent {
namespace {

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c == 0) return false;
    std::size_t extra;
    if (c < 0x80) extra = 0;
    else if ((c & 0xE0) == 0xC0 && c >= 0xC2) extra = 1;
    else if ((c & 0xF0) == 0xE0) extra = 2;
    else if ((c & 0xF8) == 0xF0 && c <= 0xF4) extra = 3;
    else return false;
    if (i + extra >= s.size() && extra > 0) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    }
    i += extra + 1;
  }
  return true;
}

struct Line {
  std::size_t offset;
  std::string_view text;  // without the line terminator
};

std::vector<Line> split_lines(std::string_view raw) {
  std::vector<Line> lines;
  std::size_t start = 0;
  while (start <= raw.size()) {
    auto end = raw.find('\n', start);
    if (end == std::string_view::npos) end = raw.size();
    auto text = raw.substr(start, end - start);
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    lines.push_back({start, text});
    if (end == raw.size()) break;
    start = end + 1;
  }
  return lines;
}

bool is_open_fence(std::string_view line) {
  if (line.substr(0, kFence.size()) != kFence) return false;
  auto rest = line.substr(kFence.size());
  if (rest.substr(0, kContractTag.size()) != kContractTag) return false;
  return trim(rest.substr(kContractTag.size())).empty();
}

bool is_close_fence(std::string_view line) { return trim(line) == kFence; }

struct Block {
  std::size_t open_offset;
  std::size_t body_offset;
  std::size_t body_length;
};

ExtractionResult parse_document(std::string_view body, std::size_t base_offset, std::string_view context) {
  try {
    return Parsed{parse_canonical(body)};
  } catch (const ParseError& e) {
    const auto offset = base_offset + e.failure().offset;
    return Repairable{{std::string(context) + "invalid JSON: expected " + e.failure().expected +
                           " at offset " + std::to_string(offset),
                       offset}};
  } catch (const InvalidModel& e) {
    return Repairable{{std::string(context) + "schema violations: " + describe(e.violations()), std::nullopt}};
  }
}

}  // namespace

ExtractionResult extract_model(std::string_view raw) {
  if (raw.size() > kMaxRawBytes) {
    return Unrepairable{"response of " + std::to_string(raw.size()) + " bytes exceeds the 1 MiB limit"};
  }
  if (trim(raw).empty()) return Unrepairable{"empty response"};
  if (!valid_utf8(raw)) return Unrepairable{"non-textual response"};

  const auto lines = split_lines(raw);
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!is_open_fence(lines[i].text)) continue;
    std::size_t j = i + 1;
    while (j < lines.size() && !is_close_fence(lines[j].text)) ++j;
    if (j == lines.size()) {
      return Repairable{{"unterminated block at offset " + std::to_string(lines[i].offset), lines[i].offset}};
    }
    const std::size_t body_offset = i + 1 < lines.size() ? lines[i + 1].offset : raw.size();
    blocks.push_back({lines[i].offset, body_offset, lines[j].offset - body_offset});
    i = j;
  }

  if (blocks.size() > 1) return Repairable{{"multiple contract blocks", blocks[1].open_offset}};
  if (blocks.size() == 1) {
    const auto& b = blocks.front();
    return parse_document(raw.substr(b.body_offset, b.body_length), b.body_offset, "contract block: ");
  }

  // No fenced block: accept a bare top-level document if one is present.
  for (const auto& line : lines) {
    const auto first = line.text.find_first_not_of(" \t");
    if (first == std::string_view::npos || line.text[first] != '{') continue;
    const auto begin = line.offset + first;
    const auto end = raw.rfind('}');
    if (end == std::string_view::npos || end < begin) break;
    return parse_document(raw.substr(begin, end - begin + 1), begin, "bare document (no threatmodel-json block): ");
  }
  return Repairable{{"no threatmodel-json block found", std::nullopt}};
}

}  // namespace tmagent
