#pragma once

// The orchestrator: drives one session from a system description to a
// delivered (or failed) threat model through a fixed transition relation,
//
//   Planning -> Drafting -> Verifying -> Reviewing -> Delivered
//                              ^  |  \                 |
//                              |  +-- repair rounds    v
//                           Refining <- AwaitingClarification
//
// with Failed reachable from every active state. Every action is appended to
// the session's event log, and replaying that log rebuilds the session.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmagent/clock.hpp"
#include "tmagent/config.hpp"
#include "tmagent/fewshot.hpp"
#include "tmagent/knowledge.hpp"
#include "tmagent/model.hpp"
#include "tmagent/prompting.hpp"
#include "tmagent/provider.hpp"
#include "tmagent/review.hpp"

namespace tmagent {

enum class AgentState { Planning, Drafting, Verifying, Reviewing, AwaitingClarification, Refining, Delivered, Failed };

std::string_view to_token(AgentState s);
std::optional<AgentState> agent_state_from_token(std::string_view token);
bool is_terminal(AgentState s);
bool is_allowed_transition(AgentState from, AgentState to);

inline const std::vector<std::string>& fixed_plan() {
  static const std::vector<std::string> plan = {"asset identification", "entry point analysis", "threat mapping",
                                                "vulnerability assessment", "mitigation suggestions"};
  return plan;
}

struct AgentConfig {
  int max_repairs = 2;         // format repairs per generation
  int max_clarify_rounds = 2;  // clarification pauses per session
  std::size_t examples = kDefaultExampleCount;
  std::size_t max_questions = kDefaultMaxQuestions;
  std::size_t unit_limit = kDefaultUnitLimit;
  std::string contract_version{kContractVersionDefault};

  static constexpr std::string_view kContractVersionDefault = "1";

  /// Upper bound on provider calls: 1 + A + C * (1 + A).
  std::size_t call_bound() const {
    const auto a = static_cast<std::size_t>(max_repairs);
    return 1 + a + static_cast<std::size_t>(max_clarify_rounds) * (1 + a);
  }
  void validate() const;  // ConfigInvalid
  nlohmann::ordered_json to_json() const;
  static AgentConfig from_json(const nlohmann::json& doc);
  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

struct SessionEvent {
  std::uint64_t seq = 0;
  TimestampMs at{};
  std::string kind;
  nlohmann::ordered_json payload;
  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

std::string to_json_line(const SessionEvent& e);
SessionEvent event_from_json(const nlohmann::ordered_json& doc);

struct Session {
  std::string session_id;
  AgentState state = AgentState::Planning;
  SystemDescription description;
  std::vector<std::string> plan;
  std::optional<ThreatModel> draft;
  std::vector<ClarificationQuestion> pending_questions;
  std::vector<QaPair> qa_history;
  std::vector<SessionEvent> events;
  int repair_attempts = 0;  // across the whole session
  int clarify_rounds = 0;
  AgentConfig config;

  // Working state, all derivable from `events`.
  int generation_repairs = 0;
  long long expected_revision = 0;
  std::string pending_prompt;
  std::string last_response;
  std::vector<QaPair> round_qa;
  std::size_t provider_calls = 0;
  std::size_t questions_issued = 0;
  bool unresolved_findings = false;
  std::optional<std::string> failure;

  friend bool operator==(const Session&, const Session&) = default;
};

/// JSON-lines event log: one `{"seq","at","kind","payload"}` object per line.
std::string serialize_event_log(std::span<const SessionEvent> events);
std::vector<SessionEvent> parse_event_log(std::string_view text);

/// Folds an event log back into the session it came from.
Session replay(std::span<const SessionEvent> events);

class WrongState : public std::logic_error {
 public:
  WrongState(std::string_view operation, AgentState actual)
      : std::logic_error(std::string(operation) + " not allowed in state " + std::string(to_token(actual))),
        actual_(actual) {}
  AgentState actual() const noexcept { return actual_; }

 private:
  AgentState actual_;
};

class InvalidDescription : public ConfigInvalid {
 public:
  explicit InvalidDescription(std::vector<SchemaViolation> violations)
      : ConfigInvalid("invalid system description: " + describe(violations)), violations_(std::move(violations)) {}
  const std::vector<SchemaViolation>& violations() const noexcept { return violations_; }

 private:
  std::vector<SchemaViolation> violations_;
};

class SessionIdSource {
 public:
  virtual ~SessionIdSource() = default;
  virtual std::string next() = 0;
};

/// "S0001", "S0002", ... Deterministic; used for reproducible runs.
class SequentialIds final : public SessionIdSource {
 public:
  explicit SequentialIds(std::string prefix = "S") : prefix_(std::move(prefix)) {}
  std::string next() override;

 private:
  std::mutex mu_;
  std::string prefix_;
  std::uint64_t counter_ = 0;
};

/// 128-bit random hex ids.
class RandomIds final : public SessionIdSource {
 public:
  RandomIds();
  std::string next() override;

 private:
  std::mutex mu_;
  std::mt19937_64 rng_;
};

class AnswerSource {
 public:
  virtual ~AnswerSource() = default;
  virtual std::vector<Answer> answer(const std::vector<ClarificationQuestion>& questions) = 0;
};

/// Leaves every question unanswered.
class NoAnswers final : public AnswerSource {
 public:
  std::vector<Answer> answer(const std::vector<ClarificationQuestion>&) override { return {}; }
};

/// Answers from a file: `{"rounds": [{"Q1": "...", "Q2": "..."}, ...]}`.
/// Round i answers the i-th pause; later pauses get no answers.
class ScriptedAnswers final : public AnswerSource {
 public:
  explicit ScriptedAnswers(std::vector<std::map<std::string, std::string>> rounds) : rounds_(std::move(rounds)) {}
  static ScriptedAnswers load(const std::filesystem::path& file);
  static ScriptedAnswers from_json(const nlohmann::json& doc);

  std::vector<Answer> answer(const std::vector<ClarificationQuestion>& questions) override;

 private:
  std::vector<std::map<std::string, std::string>> rounds_;
  std::size_t next_round_ = 0;
};

struct AgentDeps {
  std::shared_ptr<const KbSnapshot> kb;
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<const PromptingLexicon> lexicon;
  std::shared_ptr<const ReviewTemplates> templates;
  std::shared_ptr<Clock> clock;
  std::shared_ptr<SessionIdSource> ids;
};

/// Stateless driver over shared, frozen resources; one Agent may serve many
/// sessions concurrently as long as each session is used by one thread at a
/// time.
class Agent {
 public:
  explicit Agent(AgentDeps deps);

  /// Throws InvalidDescription or ConfigInvalid.
  Session start_session(const SystemDescription& desc, const AgentConfig& config) const;

  /// Executes exactly one transition. Throws WrongState when the session is
  /// terminal or waiting for answers. Provider failures move the session to
  /// Failed rather than throwing.
  void step(Session& session, Provider& provider) const;

  /// Throws WrongState or UnknownQuestionId; the session is unchanged then.
  void submit_answers(Session& session, const std::vector<Answer>& answers) const;

  void run_to_completion(Session& session, Provider& provider, AnswerSource& answers) const;

  const AgentDeps& deps() const { return deps_; }

 private:
  void emit(Session& s, std::string kind, nlohmann::ordered_json payload) const;
  void transition(Session& s, AgentState to) const;
  void fail(Session& s, const std::string& cause) const;
  bool call_provider(Session& s, Provider& provider, std::string prompt) const;

  void plan(Session& s) const;
  void draft(Session& s, Provider& provider) const;
  void verify(Session& s, Provider& provider) const;
  void review_draft(Session& s) const;
  void refine(Session& s, Provider& provider) const;

  AgentDeps deps_;
};

}  // namespace tmagent
