#pragma once

// Rule-based completeness review of a parsed draft and the clarification
// questions that follow from it. No model call happens here: the findings
// drive the agent's control flow and must be reproducible.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tmagent/knowledge.hpp"
#include "tmagent/model.hpp"

namespace tmagent {

enum class FindingSeverity { Blocking, Advisory };  // Blocking sorts first

std::string_view to_token(FindingSeverity s);

/// R1 untargeted asset, R2 unmitigated threat, R3 unused entry point,
/// R4 fewer than 4 STRIDE categories, R5 ungrounded framework id,
/// R6 no insider profile, R7 mitigation without NIST control.
enum class RuleId { R1 = 1, R2, R3, R4, R5, R6, R7 };

std::string_view to_token(RuleId r);
std::optional<RuleId> rule_from_token(std::string_view token);
FindingSeverity severity_of(RuleId r);

struct ReviewFinding {
  RuleId rule_id = RuleId::R1;
  FindingSeverity severity = FindingSeverity::Blocking;
  std::string subject_path;
  std::string subject;  // human-readable name the question template refers to
  std::string detail;
  friend bool operator==(const ReviewFinding&, const ReviewFinding&) = default;
};

struct ClarificationQuestion {
  std::string question_id;
  std::string text;  // one interrogative sentence ending in '?'
  RuleId rule_id = RuleId::R1;
  std::string subject;
  std::string target_path;
  friend bool operator==(const ClarificationQuestion&, const ClarificationQuestion&) = default;
};

using QaPair = std::pair<ClarificationQuestion, std::string>;

class UnknownQuestionId : public std::runtime_error {
 public:
  explicit UnknownQuestionId(std::string id)
      : std::runtime_error("unknown question id " + id), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

/// Question templates keyed by rule, each with a `{subject}` placeholder;
/// shipped as review_templates.json.
struct ReviewTemplates {
  std::map<RuleId, std::string> by_rule;

  static ReviewTemplates from_json(const nlohmann::json& doc);
  static ReviewTemplates load(const std::filesystem::path& file);
};

inline constexpr std::size_t kStrideCoverageThreshold = 4;
inline constexpr std::size_t kDefaultMaxQuestions = 5;

/// Findings ordered by (severity, rule, subject_path). Throws InvalidModel if
/// the model fails validation.
std::vector<ReviewFinding> review(const ThreatModel& model, const KbSnapshot& kb);

bool has_blocking(const std::vector<ReviewFinding>& findings);

/// One question per blocking finding, lowest (rule, subject) first, capped at
/// `max_questions`. Ids are `Q<first_index>`, `Q<first_index + 1>`, ...
std::vector<ClarificationQuestion> generate_questions(const std::vector<ReviewFinding>& findings,
                                                      const ReviewTemplates& templates,
                                                      std::size_t max_questions = kDefaultMaxQuestions,
                                                      std::size_t first_index = 1);

struct Answer {
  std::string question_id;
  std::string text;
  friend bool operator==(const Answer&, const Answer&) = default;
};

inline constexpr std::string_view kNoAnswer = "(no answer provided)";

struct RefinementContext {
  ThreatModel draft;
  std::vector<QaPair> qa;  // every issued question, in ask order
};

/// Pairs answers with the questions issued for `draft`. Unanswered or blank
/// answers become kNoAnswer. Throws UnknownQuestionId for an answer to a
/// question that was not issued.
RefinementContext integrate_answers(const ThreatModel& draft, const std::vector<ClarificationQuestion>& issued,
                                    const std::vector<Answer>& answers);

nlohmann::ordered_json to_json(const ReviewFinding& f);
nlohmann::ordered_json to_json(const ClarificationQuestion& q);
ClarificationQuestion question_from_json(const nlohmann::json& doc);

}  // namespace tmagent
