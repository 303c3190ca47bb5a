#include "tmagent/review.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "tmagent/io.hpp"

namespace tmagent {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kPlaceholder = "{subject}";

// Orders "assets[2]" before "assets[10]".
bool natural_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i]));
    const bool db = std::isdigit(static_cast<unsigned char>(b[j]));
    if (da && db) {
      std::size_t ei = i, ej = j;
      while (ei < a.size() && std::isdigit(static_cast<unsigned char>(a[ei]))) ++ei;
      while (ej < b.size() && std::isdigit(static_cast<unsigned char>(b[ej]))) ++ej;
      const auto na = a.substr(i, ei - i), nb = b.substr(j, ej - j);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ei;
      j = ej;
      continue;
    }
    if (a[i] != b[j]) return a[i] < b[j];
    ++i;
    ++j;
  }
  return a.size() - i < b.size() - j;
}

std::string indexed(std::string_view list, std::size_t i) {
  return std::string(list) + "[" + std::to_string(i) + "]";
}

std::string instantiate(std::string_view tmpl, std::string_view subject) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto hit = tmpl.find(kPlaceholder, pos);
    out.append(tmpl.substr(pos, hit - pos));
    if (hit == std::string_view::npos) break;
    out.append(subject);
    pos = hit + kPlaceholder.size();
  }
  return out;
}

}  // namespace

std::string_view to_token(FindingSeverity s) { return s == FindingSeverity::Blocking ? "blocking" : "advisory"; }

std::string_view to_token(RuleId r) {
  static constexpr std::string_view names[] = {"R1", "R2", "R3", "R4", "R5", "R6", "R7"};
  return names[static_cast<int>(r) - 1];
}

std::optional<RuleId> rule_from_token(std::string_view token) {
  for (int i = 1; i <= 7; ++i) {
    if (to_token(static_cast<RuleId>(i)) == token) return static_cast<RuleId>(i);
  }
  return std::nullopt;
}

FindingSeverity severity_of(RuleId r) {
  switch (r) {
    case RuleId::R4:
    case RuleId::R6:
    case RuleId::R7:
      return FindingSeverity::Advisory;
    default:
      return FindingSeverity::Blocking;
  }
}

ReviewTemplates ReviewTemplates::from_json(const json& doc) {
  const json* table = &doc;
  if (doc.is_object() && doc.contains("templates")) table = &doc["templates"];
  if (!table->is_object()) throw std::runtime_error("review templates: expected an object of rule templates");

  ReviewTemplates out;
  for (const auto& [key, value] : table->items()) {
    auto rule = rule_from_token(key);
    if (!rule) throw std::runtime_error("review templates: unknown rule id " + key);
    if (!value.is_string()) throw std::runtime_error("review templates: " + key + " must be a string");
    auto text = trim(value.get<std::string>());
    if (text.empty() || text.back() != '?')
      throw std::runtime_error("review templates: " + key + " must be a question ending in '?'");
    out.by_rule[*rule] = std::move(text);
  }
  for (auto r : {RuleId::R1, RuleId::R2, RuleId::R3, RuleId::R5}) {
    if (!out.by_rule.count(r))
      throw std::runtime_error("review templates: missing template for blocking rule " + std::string(to_token(r)));
  }
  return out;
}

ReviewTemplates ReviewTemplates::load(const std::filesystem::path& file) {
  try {
    return from_json(json::parse(read_text_file(file)));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(file.string() + ": " + e.what());
  }
}

std::vector<ReviewFinding> review(const ThreatModel& m, const KbSnapshot& kb) {
  const auto report = ground(m, kb);  // validates the model
  std::vector<ReviewFinding> out;
  auto add = [&](RuleId rule, std::string path, std::string subject, std::string detail) {
    out.push_back({rule, severity_of(rule), std::move(path), std::move(subject), std::move(detail)});
  };

  std::set<std::string> targeted, reached, mitigated;
  std::set<Stride> categories;
  for (const auto& t : m.threats) {
    targeted.insert(t.target_asset_ids.begin(), t.target_asset_ids.end());
    reached.insert(t.via_entry_point_ids.begin(), t.via_entry_point_ids.end());
    categories.insert(t.stride);
  }
  for (const auto& x : m.mitigations) mitigated.insert(x.addresses_threat_ids.begin(), x.addresses_threat_ids.end());

  for (std::size_t i = 0; i < m.assets.size(); ++i) {
    const auto& a = m.assets[i];
    if (!targeted.count(a.id))
      add(RuleId::R1, indexed("assets", i), a.name, "asset " + a.id + " '" + a.name + "' is targeted by no threat");
  }
  for (std::size_t i = 0; i < m.threats.size(); ++i) {
    const auto& t = m.threats[i];
    if (!mitigated.count(t.id))
      add(RuleId::R2, indexed("threats", i), t.title, "threat " + t.id + " '" + t.title + "' has no mitigation");
  }
  for (std::size_t i = 0; i < m.entry_points.size(); ++i) {
    const auto& e = m.entry_points[i];
    if (!reached.count(e.id))
      add(RuleId::R3, indexed("entry_points", i), e.name,
          "entry point " + e.id + " '" + e.name + "' is referenced by no threat");
  }
  if (categories.size() < kStrideCoverageThreshold) {
    std::string covered;
    for (auto c : categories) covered += (covered.empty() ? "" : ", ") + std::string(to_token(c));
    add(RuleId::R4, "threats", "STRIDE coverage",
        std::to_string(categories.size()) + " of 6 STRIDE categories covered" +
            (covered.empty() ? std::string() : " (" + covered + ")"));
  }
  auto grounding = [&](const std::vector<GroundingEntry>& entries, std::string_view what) {
    for (const auto& e : entries) add(RuleId::R5, e.path, e.id, std::string(what) + " " + e.id);
  };
  grounding(report.unknown_technique_ids, "unknown ATT&CK technique");
  grounding(report.deprecated_technique_ids, "deprecated ATT&CK technique");
  grounding(report.unknown_cve_ids, "unknown CVE");
  grounding(report.unknown_control_ids, "unknown NIST control");
  const bool insider = std::any_of(m.attacker_profiles.begin(), m.attacker_profiles.end(),
                                   [](const AttackerProfile& p) { return p.access == Access::Insider; });
  if (!insider) add(RuleId::R6, "attacker_profiles", "insider access", "no attacker profile with insider access");
  for (std::size_t i = 0; i < m.mitigations.size(); ++i) {
    const auto& x = m.mitigations[i];
    if (x.nist_control_ids.empty())
      add(RuleId::R7, indexed("mitigations", i), x.id, "mitigation " + x.id + " cites no NIST control");
  }

  std::stable_sort(out.begin(), out.end(), [](const ReviewFinding& a, const ReviewFinding& b) {
    if (a.severity != b.severity) return a.severity < b.severity;
    if (a.rule_id != b.rule_id) return a.rule_id < b.rule_id;
    return natural_less(a.subject_path, b.subject_path);
  });
  return out;
}

bool has_blocking(const std::vector<ReviewFinding>& findings) {
  return std::any_of(findings.begin(), findings.end(),
                     [](const ReviewFinding& f) { return f.severity == FindingSeverity::Blocking; });
}

std::vector<ClarificationQuestion> generate_questions(const std::vector<ReviewFinding>& findings,
                                                      const ReviewTemplates& templates, std::size_t max_questions,
                                                      std::size_t first_index) {
  std::vector<const ReviewFinding*> blocking;
  for (const auto& f : findings)
    if (f.severity == FindingSeverity::Blocking) blocking.push_back(&f);
  std::stable_sort(blocking.begin(), blocking.end(), [](const ReviewFinding* a, const ReviewFinding* b) {
    if (a->rule_id != b->rule_id) return a->rule_id < b->rule_id;
    if (a->subject != b->subject) return a->subject < b->subject;
    return natural_less(a->subject_path, b->subject_path);
  });

  std::vector<ClarificationQuestion> out;
  std::set<std::pair<RuleId, std::string>> asked;
  for (const auto* f : blocking) {
    if (out.size() == max_questions) break;
    if (!asked.emplace(f->rule_id, f->subject).second) continue;
    auto tmpl = templates.by_rule.find(f->rule_id);
    if (tmpl == templates.by_rule.end()) continue;
    out.push_back({"Q" + std::to_string(first_index + out.size()), instantiate(tmpl->second, f->subject),
                   f->rule_id, f->subject, f->subject_path});
  }
  return out;
}

RefinementContext integrate_answers(const ThreatModel& draft, const std::vector<ClarificationQuestion>& issued,
                                    const std::vector<Answer>& answers) {
  std::map<std::string, std::string> by_id;
  for (const auto& a : answers) {
    const bool known = std::any_of(issued.begin(), issued.end(),
                                   [&](const ClarificationQuestion& q) { return q.question_id == a.question_id; });
    if (!known) throw UnknownQuestionId(a.question_id);
    by_id[a.question_id] = a.text;
  }
  RefinementContext ctx{draft, {}};
  for (const auto& q : issued) {
    auto it = by_id.find(q.question_id);
    std::string text = it == by_id.end() ? std::string() : trim(it->second);
    ctx.qa.emplace_back(q, text.empty() ? std::string(kNoAnswer) : std::move(text));
  }
  return ctx;
}

ojson to_json(const ReviewFinding& f) {
  return {{"rule_id", to_token(f.rule_id)},
          {"severity", to_token(f.severity)},
          {"subject_path", f.subject_path},
          {"subject", f.subject},
          {"detail", f.detail}};
}

ojson to_json(const ClarificationQuestion& q) {
  return {{"question_id", q.question_id},
          {"text", q.text},
          {"rule_id", to_token(q.rule_id)},
          {"subject", q.subject},
          {"target_path", q.target_path}};
}

ClarificationQuestion question_from_json(const json& doc) {
  ClarificationQuestion q;
  q.question_id = doc.at("question_id").get<std::string>();
  q.text = doc.at("text").get<std::string>();
  auto rule = rule_from_token(doc.at("rule_id").get<std::string>());
  if (!rule) throw std::runtime_error("unknown rule id in question");
  q.rule_id = *rule;
  q.subject = doc.at("subject").get<std::string>();
  q.target_path = doc.at("target_path").get<std::string>();
  return q;
}

}  // namespace tmagent
