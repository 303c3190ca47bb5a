#include "tmagent/agent.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "tmagent/io.hpp"
#include "tmagent/parser.hpp"

namespace tmagent {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::pair<AgentState, std::string_view> kStateTokens[] = {
    {AgentState::Planning, "planning"},
    {AgentState::Drafting, "drafting"},
    {AgentState::Verifying, "verifying"},
    {AgentState::Reviewing, "reviewing"},
    {AgentState::AwaitingClarification, "awaiting_clarification"},
    {AgentState::Refining, "refining"},
    {AgentState::Delivered, "delivered"},
    {AgentState::Failed, "failed"},
};

ojson qa_to_json(const std::vector<QaPair>& qa) {
  ojson out = ojson::array();
  for (const auto& [q, a] : qa) out.push_back({{"question", to_json(q)}, {"answer", a}});
  return out;
}

std::vector<QaPair> qa_from_json(const json& doc) {
  std::vector<QaPair> out;
  for (const auto& item : doc) out.emplace_back(question_from_json(item.at("question")), item.at("answer").get<std::string>());
  return out;
}

ThreatModel model_from_payload(const json& doc) { return parse_canonical(doc.dump()); }

}  // namespace

std::string_view to_token(AgentState s) {
  for (const auto& [state, token] : kStateTokens)
    if (state == s) return token;
  return "";
}

std::optional<AgentState> agent_state_from_token(std::string_view token) {
  for (const auto& [state, t] : kStateTokens)
    if (t == token) return state;
  return std::nullopt;
}

bool is_terminal(AgentState s) { return s == AgentState::Delivered || s == AgentState::Failed; }

bool is_allowed_transition(AgentState from, AgentState to) {
  using S = AgentState;
  switch (from) {
    case S::Planning: return to == S::Drafting || to == S::Failed;
    case S::Drafting: return to == S::Verifying || to == S::Failed;
    case S::Verifying: return to == S::Reviewing || to == S::Failed;
    case S::Reviewing: return to == S::AwaitingClarification || to == S::Delivered;
    case S::AwaitingClarification: return to == S::Refining;
    case S::Refining: return to == S::Verifying || to == S::Failed;
    case S::Delivered:
    case S::Failed: return false;
  }
  return false;
}

void AgentConfig::validate() const {
  if (max_repairs < 0) throw ConfigInvalid("agent.max_repairs must be non-negative");
  if (max_clarify_rounds < 0) throw ConfigInvalid("agent.max_clarify_rounds must be non-negative");
  if (examples == 0) throw ConfigInvalid("agent.examples must be positive");
  if (max_questions == 0) throw ConfigInvalid("agent.max_questions must be positive");
  if (unit_limit == 0) throw ConfigInvalid("agent.unit_limit must be positive");
  if (contract_version.empty()) throw ConfigInvalid("agent.contract_version must not be empty");
}

ojson AgentConfig::to_json() const {
  return {{"max_repairs", max_repairs},          {"max_clarify_rounds", max_clarify_rounds},
          {"examples", examples},                {"max_questions", max_questions},
          {"unit_limit", unit_limit},            {"contract_version", contract_version}};
}

AgentConfig AgentConfig::from_json(const json& doc) {
  AgentConfig c;
  c.max_repairs = doc.value("max_repairs", c.max_repairs);
  c.max_clarify_rounds = doc.value("max_clarify_rounds", c.max_clarify_rounds);
  c.examples = doc.value("examples", c.examples);
  c.max_questions = doc.value("max_questions", c.max_questions);
  c.unit_limit = doc.value("unit_limit", c.unit_limit);
  c.contract_version = doc.value("contract_version", c.contract_version);
  return c;
}

std::string to_json_line(const SessionEvent& e) {
  ojson line = {{"seq", e.seq}, {"at", format_rfc3339_ms(e.at)}, {"kind", e.kind}, {"payload", e.payload}};
  return line.dump();
}

SessionEvent event_from_json(const ojson& doc) {
  SessionEvent e;
  e.seq = doc.at("seq").get<std::uint64_t>();
  const auto at = parse_rfc3339_ms(doc.at("at").get<std::string>());
  if (!at) throw std::runtime_error("event " + std::to_string(e.seq) + ": bad timestamp");
  e.at = *at;
  e.kind = doc.at("kind").get<std::string>();
  e.payload = doc.at("payload");
  return e;
}

std::string serialize_event_log(std::span<const SessionEvent> events) {
  std::string out;
  for (const auto& e : events) {
    out += to_json_line(e);
    out += '\n';
  }
  return out;
}

std::vector<SessionEvent> parse_event_log(std::string_view text) {
  std::vector<SessionEvent> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    out.push_back(event_from_json(ojson::parse(line)));
  }
  return out;
}

Session replay(std::span<const SessionEvent> events) {
  Session s;
  for (const auto& e : events) {
    const auto& p = e.payload;
    if (e.kind == "session_started") {
      s.session_id = p.at("session_id").get<std::string>();
      s.description = description_from_json(p.at("description"));
      s.plan = p.at("plan").get<std::vector<std::string>>();
      s.config = AgentConfig::from_json(p.at("config"));
    } else if (e.kind == "transition") {
      const auto to = agent_state_from_token(p.at("to").get<std::string>());
      if (!to) throw std::runtime_error("event " + std::to_string(e.seq) + ": unknown state");
      s.state = *to;
    } else if (e.kind == "prompt_assembled") {
      s.pending_prompt = p.at("prompt").get<std::string>();
      s.expected_revision = 0;
      s.generation_repairs = 0;
    } else if (e.kind == "exchange") {
      s.pending_prompt = p.at("request_text").get<std::string>();
      s.last_response = p.at("response_text").get<std::string>();
      ++s.provider_calls;
    } else if (e.kind == "repair_requested") {
      ++s.repair_attempts;
      ++s.generation_repairs;
    } else if (e.kind == "refinement_requested") {
      s.expected_revision = p.at("expected_revision").get<long long>();
      s.generation_repairs = 0;
    } else if (e.kind == "draft") {
      s.draft = model_from_payload(p.at("model"));
    } else if (e.kind == "questions") {
      s.pending_questions.clear();
      for (const auto& q : p.at("questions")) s.pending_questions.push_back(question_from_json(q));
      s.questions_issued += s.pending_questions.size();
    } else if (e.kind == "answers") {
      s.round_qa = qa_from_json(p.at("qa"));
      s.qa_history.insert(s.qa_history.end(), s.round_qa.begin(), s.round_qa.end());
      s.pending_questions.clear();
      ++s.clarify_rounds;
    } else if (e.kind == "annotation") {
      s.unresolved_findings = true;
    } else if (e.kind == "error") {
      s.failure = p.at("cause").get<std::string>();
    }
    s.events.push_back(e);
  }
  return s;
}

std::string SequentialIds::next() {
  std::lock_guard lock(mu_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04llu", static_cast<unsigned long long>(++counter_));
  return prefix_ + buf;
}

RandomIds::RandomIds() {
  std::random_device rd;
  std::seed_seq seq{rd(), rd(), rd(), rd()};
  rng_.seed(seq);
}

std::string RandomIds::next() {
  std::lock_guard lock(mu_);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                static_cast<unsigned long long>(rng_()));
  return buf;
}

ScriptedAnswers ScriptedAnswers::from_json(const json& doc) {
  const auto rounds = doc.find("rounds");
  if (!doc.is_object() || rounds == doc.end() || !rounds->is_array()) {
    throw ConfigInvalid("answers file needs a \"rounds\" array");
  }
  std::vector<std::map<std::string, std::string>> out;
  for (const auto& r : *rounds) {
    if (!r.is_object()) throw ConfigInvalid("answers round must be an object of question id to answer");
    std::map<std::string, std::string> round;
    for (const auto& [k, v] : r.items()) {
      if (!v.is_string()) throw ConfigInvalid("answer to " + k + " must be a string");
      round[k] = v.get<std::string>();
    }
    out.push_back(std::move(round));
  }
  return ScriptedAnswers(std::move(out));
}

ScriptedAnswers ScriptedAnswers::load(const std::filesystem::path& file) {
  try {
    return from_json(json::parse(read_text_file(file)));
  } catch (const json::exception& e) {
    throw ConfigInvalid(file.string() + ": " + e.what());
  } catch (const ConfigInvalid& e) {
    throw ConfigInvalid(file.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigInvalid(e.what());
  }
}

std::vector<Answer> ScriptedAnswers::answer(const std::vector<ClarificationQuestion>& questions) {
  std::vector<Answer> out;
  if (next_round_ >= rounds_.size()) return out;
  const auto& round = rounds_[next_round_++];
  // Answers to ids that were not asked this round are dropped, so one file can
  // serve sessions whose question numbering differs.
  for (const auto& q : questions)
    if (auto it = round.find(q.question_id); it != round.end()) out.push_back({q.question_id, it->second});
  return out;
}

Agent::Agent(AgentDeps deps) : deps_(std::move(deps)) {
  if (!deps_.kb || !deps_.corpus || !deps_.lexicon || !deps_.templates || !deps_.clock || !deps_.ids) {
    throw std::invalid_argument("agent: every dependency must be provided");
  }
}

void Agent::emit(Session& s, std::string kind, ojson payload) const {
  SessionEvent e;
  e.seq = s.events.size() + 1;
  e.at = deps_.clock->wall_now();
  e.kind = std::move(kind);
  e.payload = std::move(payload);
  s.events.push_back(std::move(e));
}

void Agent::transition(Session& s, AgentState to) const {
  if (!is_allowed_transition(s.state, to)) {
    throw std::logic_error("illegal transition " + std::string(to_token(s.state)) + " -> " + std::string(to_token(to)));
  }
  emit(s, "transition", {{"from", to_token(s.state)}, {"to", to_token(to)}});
  s.state = to;
}

void Agent::fail(Session& s, const std::string& cause) const {
  emit(s, "error", {{"cause", cause}});
  s.failure = cause;
  transition(s, AgentState::Failed);
}

bool Agent::call_provider(Session& s, Provider& provider, std::string prompt) const {
  try {
    auto x = provider.complete(prompt);
    s.pending_prompt = std::move(prompt);
    s.last_response = x.response_text;
    ++s.provider_calls;
    emit(s, "exchange", to_json(x));
    return true;
  } catch (const ProviderError& e) {
    fail(s, std::string("provider: ") + e.what());
    return false;
  }
}

Session Agent::start_session(const SystemDescription& desc, const AgentConfig& config) const {
  config.validate();
  if (auto v = validate_description(desc); !v.empty()) throw InvalidDescription(std::move(v));
  Session s;
  s.session_id = deps_.ids->next();
  s.description = desc;
  s.plan = fixed_plan();
  s.config = config;
  emit(s, "session_started",
       {{"session_id", s.session_id},
        {"description", description_to_json(desc)},
        {"plan", s.plan},
        {"config", config.to_json()}});
  emit(s, "transition", {{"from", nullptr}, {"to", to_token(AgentState::Planning)}});
  return s;
}

void Agent::plan(Session& s) const {
  const auto examples = select_examples(s.description, *deps_.corpus, s.config.examples);
  try {
    auto prompt = assemble_generation_prompt(s.description, examples, s.config.contract_version, *deps_.lexicon,
                                             s.config.unit_limit);
    s.pending_prompt = prompt.text();
    s.expected_revision = 0;
    s.generation_repairs = 0;
    emit(s, "prompt_assembled",
         {{"class", to_token(prompt.cls)},
          {"examples", prompt.examples_included},
          {"units", prompt.total_unit_estimate},
          {"prompt", s.pending_prompt}});
    transition(s, AgentState::Drafting);
  } catch (const BudgetExceeded& e) {
    fail(s, e.what());
  }
}

void Agent::draft(Session& s, Provider& provider) const {
  if (call_provider(s, provider, s.pending_prompt)) transition(s, AgentState::Verifying);
}

void Agent::verify(Session& s, Provider& provider) const {
  auto result = extract_model(s.last_response);
  if (auto* parsed = std::get_if<Parsed>(&result)) {
    if (parsed->model.revision != s.expected_revision) {
      result = Repairable{FormatFailure{"revision must be " + std::to_string(s.expected_revision) + ", got " +
                                            std::to_string(parsed->model.revision),
                                        std::nullopt}};
    }
  }

  if (auto* parsed = std::get_if<Parsed>(&result)) {
    emit(s, "extraction", {{"outcome", "parsed"}});
    s.draft = std::move(parsed->model);
    emit(s, "draft", {{"model", model_to_json(*s.draft)}});
    transition(s, AgentState::Reviewing);
    return;
  }
  if (auto* bad = std::get_if<Unrepairable>(&result)) {
    emit(s, "extraction", {{"outcome", "unrepairable"}, {"detail", bad->reason}});
    fail(s, "unrepairable output: " + bad->reason);
    return;
  }

  const auto& failure = std::get<Repairable>(result).failure;
  ojson extraction = {{"outcome", "repairable"}, {"detail", failure.detail}};
  if (failure.offset) extraction["offset"] = *failure.offset;
  emit(s, "extraction", std::move(extraction));
  if (s.generation_repairs >= s.config.max_repairs) {
    fail(s, "format repair limit reached: " + failure.detail);
    return;
  }
  ++s.repair_attempts;
  ++s.generation_repairs;
  emit(s, "repair_requested", {{"attempt", s.generation_repairs}, {"detail", failure.detail}});
  call_provider(s, provider,
                assemble_repair_prompt(s.last_response, failure, s.config.contract_version, s.expected_revision));
  // Staying in Verifying: the next step checks the repaired reply.
}

void Agent::review_draft(Session& s) const {
  const auto findings = review(*s.draft, *deps_.kb);
  ojson list = ojson::array();
  std::size_t blocking = 0;
  for (const auto& f : findings) {
    list.push_back(to_json(f));
    if (f.severity == FindingSeverity::Blocking) ++blocking;
  }
  emit(s, "findings", {{"grounding_evaluated", true}, {"blocking", blocking}, {"findings", std::move(list)}});

  if (blocking > 0 && s.clarify_rounds < s.config.max_clarify_rounds) {
    auto questions = generate_questions(findings, *deps_.templates, s.config.max_questions, s.questions_issued + 1);
    if (!questions.empty()) {
      ojson qs = ojson::array();
      for (const auto& q : questions) qs.push_back(to_json(q));
      s.questions_issued += questions.size();
      s.pending_questions = std::move(questions);
      emit(s, "questions", {{"questions", std::move(qs)}});
      transition(s, AgentState::AwaitingClarification);
      return;
    }
  }
  if (!findings.empty()) {
    std::vector<std::string> rules;
    for (const auto& f : findings) {
      std::string r(to_token(f.rule_id));
      if (std::find(rules.begin(), rules.end(), r) == rules.end()) rules.push_back(std::move(r));
    }
    s.unresolved_findings = true;
    emit(s, "annotation",
         {{"note", blocking > 0 ? "unresolved findings" : "advisory findings"}, {"blocking", blocking > 0}, {"rules", rules}});
  }
  transition(s, AgentState::Delivered);
}

void Agent::refine(Session& s, Provider& provider) const {
  s.expected_revision = s.draft->revision + 1;
  s.generation_repairs = 0;
  emit(s, "refinement_requested", {{"expected_revision", s.expected_revision}});
  if (call_provider(s, provider, assemble_refinement_prompt(*s.draft, s.round_qa))) transition(s, AgentState::Verifying);
}

void Agent::step(Session& s, Provider& provider) const {
  switch (s.state) {
    case AgentState::Planning: plan(s); return;
    case AgentState::Drafting: draft(s, provider); return;
    case AgentState::Verifying: verify(s, provider); return;
    case AgentState::Reviewing: review_draft(s); return;
    case AgentState::Refining: refine(s, provider); return;
    case AgentState::AwaitingClarification:
    case AgentState::Delivered:
    case AgentState::Failed: throw WrongState("step", s.state);
  }
}

void Agent::submit_answers(Session& s, const std::vector<Answer>& answers) const {
  if (s.state != AgentState::AwaitingClarification) throw WrongState("submit_answers", s.state);
  auto ctx = integrate_answers(*s.draft, s.pending_questions, answers);
  s.round_qa = std::move(ctx.qa);
  s.qa_history.insert(s.qa_history.end(), s.round_qa.begin(), s.round_qa.end());
  s.pending_questions.clear();
  ++s.clarify_rounds;
  emit(s, "answers", {{"qa", qa_to_json(s.round_qa)}});
  transition(s, AgentState::Refining);
}

void Agent::run_to_completion(Session& s, Provider& provider, AnswerSource& answers) const {
  while (!is_terminal(s.state)) {
    if (s.state == AgentState::AwaitingClarification) {
      submit_answers(s, answers.answer(s.pending_questions));
    } else {
      step(s, provider);
    }
  }
}

}  // namespace tmagent
