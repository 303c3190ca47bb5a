#include "tmagent/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "tmagent/contract.hpp"
#include "tmagent/io.hpp"

namespace tmagent {

using json = nlohmann::json;

namespace {

constexpr std::string_view kPlanSteps[] = {"asset identification", "entry point analysis", "threat mapping",
                                           "vulnerability assessment", "mitigation suggestions"};

constexpr std::size_t kMaxQuotedReply = 32 * 1024;

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

struct Match {
  std::size_t begin;
  std::size_t end;
  std::string phrase;
};

// Occurrences of `phrase` in `haystack` (both lower-case) on word boundaries,
// optionally followed by a plural suffix.
void find_phrase(std::string_view haystack, const std::string& phrase, bool allow_plural, std::vector<Match>& out) {
  if (phrase.empty()) return;
  std::size_t pos = 0;
  while ((pos = haystack.find(phrase, pos)) != std::string_view::npos) {
    const bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]);
    std::size_t end = pos + phrase.size();
    bool right_ok = end == haystack.size() || !is_word_char(haystack[end]);
    if (!right_ok && allow_plural) {
      for (std::string_view suffix : {"es", "s"}) {
        const auto e = end + suffix.size();
        if (haystack.substr(end, suffix.size()) == suffix && (e == haystack.size() || !is_word_char(haystack[e]))) {
          end = e;
          right_ok = true;
          break;
        }
      }
    }
    if (left_ok && right_ok) out.push_back({pos, end, phrase});
    ++pos;
  }
}

std::string enum_choices(const auto& table) {
  std::string out;
  for (const auto& [value, token] : table) out += (out.empty() ? "" : "|") + std::string(token);
  return out;
}

std::string schema_outline() {
  std::ostringstream os;
  os << "{\n"
     << "  \"model_id\": string,\n"
     << "  \"system\": {\"title\": string, \"narrative\": string, \"components\": [{\"name\": string, \"kind\": "
     << enum_choices(all_values<ComponentKind>()) << ", \"detail\": string|null}], \"tags\": [lowercase string]},\n"
     << "  \"assets\": [{\"id\", \"name\", \"description\", \"sensitivity\": " << enum_choices(all_values<Level>())
     << "}],\n"
     << "  \"entry_points\": [{\"id\", \"name\", \"channel\": " << enum_choices(all_values<Channel>())
     << ", \"exposed_to\": " << enum_choices(all_values<Exposure>()) << "}],\n"
     << "  \"attacker_profiles\": [{\"id\", \"label\", \"motivation\", \"capability\": "
     << enum_choices(all_values<Capability>()) << ", \"access\": " << enum_choices(all_values<Access>()) << "}],\n"
     << "  \"threats\": [{\"id\", \"title\", \"description\", \"stride\": " << enum_choices(all_values<Stride>())
     << ", \"attack_technique_ids\": [\"T1234\"|\"T1234.001\"], \"cve_ids\": [\"CVE-YYYY-NNNN\"], "
        "\"target_asset_ids\": [asset id, at least one], \"via_entry_point_ids\": [entry point id], \"severity\": "
     << enum_choices(all_values<Level>()) << "}],\n"
     << "  \"vulnerabilities\": [{\"id\", \"description\", \"cve_ids\", \"affected_asset_ids\": [asset id, at least "
        "one]}],\n"
     << "  \"mitigations\": [{\"id\", \"description\", \"nist_control_ids\": [\"AC-2\"|\"IA-2(1)\"], "
        "\"addresses_threat_ids\": [threat id, at least one]}],\n"
     << "  \"revision\": integer,\n"
     << "  \"produced_at\": RFC 3339 UTC timestamp\n"
     << "}";
  return os.str();
}

std::string instructions() {
  std::ostringstream os;
  os << "You are a threat modeling assistant. Produce a complete, structured threat model for the system described "
        "at the end of this message.\n"
     << "Work through these steps in order:";
  for (std::size_t i = 0; i < std::size(kPlanSteps); ++i) os << " " << (i + 1) << ". " << kPlanSteps[i] << ";";
  os << "\n"
     << "Classify every threat with exactly one STRIDE category. Cite MITRE ATT&CK technique ids, CVE ids and NIST "
        "SP 800-53 control ids only where they genuinely apply; never invent identifiers.\n"
     << "Every asset should be targeted by at least one threat, every entry point used by at least one threat, and "
        "every threat addressed by at least one mitigation. Include at least one insider attacker profile where "
        "insiders exist.";
  return os.str();
}

std::string contract_section(std::string_view version, std::optional<long long> revision) {
  std::ostringstream os;
  os << "Output contract (version " << version << "):\n"
     << "Reply with exactly one fenced block whose opening line is " << kFence << kContractTag
     << " and whose closing line is " << kFence
     << ". The block must contain one JSON document with exactly these top-level keys and value shapes:\n"
     << schema_outline() << "\n"
     << "Use short uppercase ids (A1, E1, P1, T1, V1, M1).";
  if (revision) os << " Set \"revision\" to " << *revision << ".";
  os << " Text outside the block is ignored.";
  return os.str();
}

std::string quote_block(std::string_view text) {
  std::string out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    out += "> ";
    out.append(text.substr(start, end - start));
    out += '\n';
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

std::string user_section(const SystemDescription& desc, PromptClass cls) {
  std::ostringstream os;
  os << "System to model:\n"
     << "Title: " << neutralize_fences(desc.title) << "\n"
     << "Request class: " << to_token(cls) << "\n";
  if (!desc.components.empty()) {
    os << "Named components:\n";
    for (const auto& c : desc.components) {
      os << "- " << neutralize_fences(c.name) << " (" << to_token(c.kind) << ")";
      if (c.detail && !c.detail->empty()) os << ": " << neutralize_fences(*c.detail);
      os << "\n";
    }
  }
  if (!desc.tags.empty()) {
    os << "Tags:";
    for (const auto& t : desc.tags) os << " " << t;
    os << "\n";
  }
  os << "Description:\n" << neutralize_fences(desc.narrative) << "\n";
  return os.str();
}

std::string examples_section(std::span<const FewShotExample* const> examples) {
  if (examples.empty()) return {};
  std::ostringstream os;
  os << "Worked examples (" << examples.size() << "):\n";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = *examples[i];
    os << "\nExample " << (i + 1) << " [" << ex.example_id << "] request:\n"
       << neutralize_fences(ex.prompt_text) << "\n"
       << "Example " << (i + 1) << " threat model:\n"
       << kFence << "json\n"
       << render_canonical(ex.canonical_model) << kFence << "\n";
  }
  return os.str();
}

}  // namespace

std::string neutralize_fences(std::string_view text) {
  std::string out(text);
  auto replace_all = [&](std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = out.find(from, pos)) != std::string::npos) {
      out.replace(pos, from.size(), to);
      pos += to.size();
    }
  };
  replace_all(kFence, "'''");
  replace_all(kContractTag, "threatmodel_json");
  return out;
}

PromptingLexicon PromptingLexicon::from_json(const json& doc) {
  if (!doc.is_object()) throw std::runtime_error("prompting lexicon: expected an object");
  PromptingLexicon lex;
  if (auto v = doc.find("version"); v != doc.end() && v->is_string()) lex.version = v->get<std::string>();
  const auto markers = doc.find("flow_markers");
  const auto keywords = doc.find("component_keywords");
  if (markers == doc.end() || !markers->is_array() || markers->empty())
    throw std::runtime_error("prompting lexicon: flow_markers must be a non-empty array");
  if (keywords == doc.end() || !keywords->is_object())
    throw std::runtime_error("prompting lexicon: component_keywords must map kind -> list");
  for (const auto& m : *markers) lex.flow_markers.push_back(to_lower_ascii(m.get<std::string>()));
  for (const auto& [kind, list] : keywords->items()) {
    auto k = from_token<ComponentKind>(kind);
    if (!k) throw std::runtime_error("prompting lexicon: unknown component kind " + kind);
    for (const auto& w : list) lex.component_keywords[*k].push_back(to_lower_ascii(w.get<std::string>()));
  }
  return lex;
}

PromptingLexicon PromptingLexicon::load(const std::filesystem::path& file) {
  try {
    return from_json(json::parse(read_text_file(file)));
  } catch (const json::exception& e) {
    throw std::runtime_error(file.string() + ": " + e.what());
  }
}

std::size_t estimate_units(std::string_view text) { return (text.size() + 3) / 4; }

std::vector<std::string> match_component_phrases(std::string_view narrative, const PromptingLexicon& lex) {
  const auto haystack = to_lower_ascii(narrative);
  std::vector<Match> matches;
  for (const auto& [kind, words] : lex.component_keywords)
    for (const auto& w : words) find_phrase(haystack, w, true, matches);

  std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    const auto la = a.end - a.begin, lb = b.end - b.begin;
    if (la != lb) return la > lb;
    return a.begin < b.begin;
  });
  std::vector<std::pair<std::size_t, std::size_t>> taken;
  std::set<std::string> phrases;
  for (const auto& m : matches) {
    const bool overlaps = std::any_of(taken.begin(), taken.end(),
                                      [&](const auto& span) { return m.begin < span.second && span.first < m.end; });
    if (overlaps) continue;
    taken.emplace_back(m.begin, m.end);
    phrases.insert(m.phrase);
  }
  return {phrases.begin(), phrases.end()};
}

bool has_flow_marker(std::string_view narrative, const PromptingLexicon& lex) {
  const auto haystack = to_lower_ascii(narrative);
  std::vector<Match> matches;
  for (const auto& marker : lex.flow_markers) {
    find_phrase(haystack, marker, false, matches);
    if (!matches.empty()) return true;
  }
  return false;
}

PromptClass classify_prompt(const SystemDescription& desc, const PromptingLexicon& lex) {
  const std::size_t components =
      desc.components.empty() ? match_component_phrases(desc.narrative, lex).size() : desc.components.size();
  if (components == 0) return PromptClass::Complex;
  if (components >= 3 && has_flow_marker(desc.narrative, lex)) return PromptClass::Simple;
  return PromptClass::Compound;
}

std::string AssembledPrompt::text() const {
  std::string out = system_instructions + "\n\n" + output_contract + "\n\n";
  if (!examples_section.empty()) out += examples_section + "\n";
  out += user_section;
  return out;
}

AssembledPrompt assemble_generation_prompt(const SystemDescription& desc,
                                           std::span<const FewShotExample* const> examples,
                                           std::string_view contract_version, const PromptingLexicon& lex,
                                           std::size_t unit_limit) {
  AssembledPrompt p;
  p.cls = classify_prompt(desc, lex);
  p.system_instructions = instructions();
  p.output_contract = contract_section(contract_version, 0);
  p.user_section = user_section(desc, p.cls);

  for (std::size_t n = examples.size() + 1; n-- > 0;) {
    const auto subset = examples.first(n);
    p.examples_section = examples_section(subset);
    p.total_unit_estimate = estimate_units(p.text());
    if (p.total_unit_estimate <= unit_limit) {
      p.examples_included.clear();
      for (const auto* ex : subset) p.examples_included.push_back(ex->example_id);
      return p;
    }
  }
  throw BudgetExceeded(p.total_unit_estimate, unit_limit);
}

std::string assemble_repair_prompt(std::string_view previous_output, const FormatFailure& failure,
                                   std::string_view contract_version, std::optional<long long> expected_revision) {
  std::ostringstream os;
  os << "Your previous reply could not be accepted.\n"
     << "Problem: " << failure.detail << "\n\n"
     << "Previous reply:\n";
  if (trim(previous_output).empty()) {
    os << "(empty response)\n";
  } else if (previous_output.size() > kMaxQuotedReply) {
    os << quote_block(neutralize_fences(previous_output.substr(0, kMaxQuotedReply)))
       << "> [truncated after " << kMaxQuotedReply << " bytes]\n";
  } else {
    os << quote_block(neutralize_fences(previous_output));
  }
  os << "\nRe-emit the complete threat model strictly within one fenced block tagged " << kContractTag
     << ", fixing the problem above and changing nothing else.\n\n"
     << contract_section(contract_version, expected_revision) << "\n";
  return os.str();
}

std::string assemble_refinement_prompt(const ThreatModel& draft, std::span<const QaPair> qa) {
  const auto next_revision = draft.revision + 1;
  std::ostringstream os;
  os << instructions() << "\n\n"
     << "Below is the current draft threat model (revision " << draft.revision
     << ") and the user's answers to clarification questions about it.\n\n"
     << "Current draft:\n"
     << kFence << kContractTag << "\n"
     << render_canonical(draft) << kFence << "\n\n"
     << "Clarifications:\n";
  for (std::size_t i = 0; i < qa.size(); ++i) {
    const auto& [q, a] = qa[i];
    os << "Q" << (i + 1) << " [" << q.question_id << "]: " << neutralize_fences(q.text) << "\n"
       << "A" << (i + 1) << ": " << neutralize_fences(a) << "\n";
  }
  os << "\nIntegrate the answers and return the FULL revised threat model, not a diff, in one fenced block "
        "tagged as above. Keep existing ids stable, keep model_id unchanged, and set \"revision\" to "
     << next_revision << ".\n";
  return os.str();
}

}  // namespace tmagent
