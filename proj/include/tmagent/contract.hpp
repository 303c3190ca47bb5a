#pragma once

#include <string>
#include <string_view>

namespace tmagent {

/// Fence tag of the one block a provider reply must carry.
inline constexpr std::string_view kContractTag = "threatmodel-json";
inline constexpr std::string_view kFence = "```";
inline constexpr std::string_view kContractVersion = "1";

/// Rewrites fence markers and the contract tag inside free text that gets
/// embedded in a prompt, so that text can never open a contract block.
std::string neutralize_fences(std::string_view text);

}  // namespace tmagent
