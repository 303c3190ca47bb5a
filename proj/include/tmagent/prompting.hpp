#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tmagent/fewshot.hpp"
#include "tmagent/model.hpp"
#include "tmagent/parser.hpp"
#include "tmagent/prompt_class.hpp"
#include "tmagent/review.hpp"

namespace tmagent {

/// Fixed classification tables, shipped as prompting_lexicon.json.
struct PromptingLexicon {
  std::string version;
  std::vector<std::string> flow_markers;
  std::map<ComponentKind, std::vector<std::string>> component_keywords;

  static PromptingLexicon from_json(const nlohmann::json& doc);
  static PromptingLexicon load(const std::filesystem::path& file);
};

class BudgetExceeded : public std::runtime_error {
 public:
  BudgetExceeded(std::size_t estimate, std::size_t limit)
      : std::runtime_error("prompt needs ~" + std::to_string(estimate) + " units, limit is " +
                           std::to_string(limit)),
        estimate_(estimate),
        limit_(limit) {}
  std::size_t estimate() const noexcept { return estimate_; }
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t estimate_;
  std::size_t limit_;
};

struct AssembledPrompt {
  PromptClass cls = PromptClass::Complex;
  std::string system_instructions;
  std::string output_contract;
  std::vector<std::string> examples_included;
  std::string examples_section;
  std::string user_section;
  std::size_t total_unit_estimate = 0;

  std::string text() const;
};

/// ceil(characters / 4).
std::size_t estimate_units(std::string_view text);

/// Distinct component phrases from the keyword table found in `narrative`.
/// Matching is case-insensitive on word boundaries and tolerates a plural
/// `s`/`es`; where matches overlap the longest wins.
std::vector<std::string> match_component_phrases(std::string_view narrative, const PromptingLexicon& lex);
bool has_flow_marker(std::string_view narrative, const PromptingLexicon& lex);

PromptClass classify_prompt(const SystemDescription& desc, const PromptingLexicon& lex);

inline constexpr std::size_t kDefaultUnitLimit = 24000;

/// Instructions, output contract, examples (best first) and the user section,
/// in that order. Examples are dropped from the lowest-ranked end until the
/// estimate fits `unit_limit`; BudgetExceeded if even zero examples do not fit.
AssembledPrompt assemble_generation_prompt(const SystemDescription& desc,
                                           std::span<const FewShotExample* const> examples,
                                           std::string_view contract_version, const PromptingLexicon& lex,
                                           std::size_t unit_limit = kDefaultUnitLimit);

/// Quotes the failure detail verbatim and asks for one clean contract block.
/// Carries no few-shot examples.
std::string assemble_repair_prompt(std::string_view previous_output, const FormatFailure& failure,
                                   std::string_view contract_version = "1",
                                   std::optional<long long> expected_revision = std::nullopt);

/// The draft as the single contract block, the Q/A transcript in ask order,
/// and a request for the full model at draft.revision + 1.
std::string assemble_refinement_prompt(const ThreatModel& draft, std::span<const QaPair> qa);

}  // namespace tmagent
