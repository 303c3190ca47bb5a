#include "tmagent/knowledge.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include <openssl/evp.h>

#include "tmagent/io.hpp"

namespace tmagent {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

json parse_source(std::string_view document, std::string_view what) {
  try {
    return json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw MalformedSource(std::string(what) + ": not valid JSON (" + e.what() + ")");
  }
}

const json* path_get(const json& root, std::initializer_list<std::string_view> keys) {
  const json* cur = &root;
  for (auto k : keys) {
    if (!cur->is_object()) return nullptr;
    auto it = cur->find(std::string(k));
    if (it == cur->end()) return nullptr;
    cur = &*it;
  }
  return cur;
}

std::string string_or_empty(const json* v) {
  return v && v->is_string() ? v->get<std::string>() : std::string();
}

std::string english_description(const json* list, std::string_view value_key = "value") {
  if (!list || !list->is_array()) return {};
  std::string fallback;
  for (const auto& d : *list) {
    if (!d.is_object()) continue;
    auto text = string_or_empty(path_get(d, {value_key}));
    if (string_or_empty(path_get(d, {"lang"})) == "en") return text;
    if (fallback.empty()) fallback = text;
  }
  return fallback;
}

// First baseScore found among the CVSS metric blocks, newest version first.
const json* nvd_base_score(const json& item) {
  if (auto v = path_get(item, {"impact", "baseMetricV3", "cvssV3", "baseScore"})) return v;
  if (auto v = path_get(item, {"impact", "baseMetricV2", "cvssV2", "baseScore"})) return v;
  if (auto v = path_get(item, {"baseScore"})) return v;
  if (auto metrics = path_get(item, {"cve", "metrics"}); metrics && metrics->is_object()) {
    for (auto key : {"cvssMetricV40", "cvssMetricV31", "cvssMetricV30", "cvssMetricV2"}) {
      auto list = metrics->find(key);
      if (list == metrics->end() || !list->is_array() || list->empty()) continue;
      if (auto v = path_get((*list)[0], {"cvssData", "baseScore"})) return v;
    }
  }
  return nullptr;
}

struct NvdItemView {
  std::string id;
  std::string summary;
  const json* score = nullptr;
  std::string published;
};

NvdItemView view_nvd_item(const json& item) {
  NvdItemView v;
  if (auto id = path_get(item, {"cve", "CVE_data_meta", "ID"})) {  // 1.1 feed
    v.id = string_or_empty(id);
    v.summary = english_description(path_get(item, {"cve", "description", "description_data"}));
    v.published = string_or_empty(path_get(item, {"publishedDate"}));
  } else if (auto id2 = path_get(item, {"cve", "id"})) {  // 2.0 API
    v.id = string_or_empty(id2);
    v.summary = english_description(path_get(item, {"cve", "descriptions"}));
    v.published = string_or_empty(path_get(item, {"cve", "published"}));
  } else {  // flattened {id, description, ...}
    v.id = string_or_empty(path_get(item, {"id"}));
    v.summary = string_or_empty(path_get(item, {"description"}));
    v.published = string_or_empty(path_get(item, {"published"}));
  }
  v.score = nvd_base_score(item);
  if (v.published.size() > 10) v.published.resize(10);
  return v;
}

std::map<std::string, std::size_t> header_index(const std::vector<std::string>& header) {
  std::map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < header.size(); ++i) out.emplace(to_lower_ascii(trim(header[i])), i);
  return out;
}

std::optional<std::size_t> column(const std::map<std::string, std::size_t>& idx,
                                  std::initializer_list<std::string_view> names) {
  for (auto n : names)
    if (auto it = idx.find(std::string(n)); it != idx.end()) return it->second;
  return std::nullopt;
}

std::string cell(const std::vector<std::string>& row, std::size_t i) {
  return i < row.size() ? trim(row[i]) : std::string();
}

std::string_view to_token(AdvisorySource s) { return s == AdvisorySource::Cisa ? "cisa" : "other"; }

}  // namespace

std::string_view to_token(SourceKind kind) {
  switch (kind) {
    case SourceKind::Attack: return "attack";
    case SourceKind::Nvd: return "nvd";
    case SourceKind::Nist: return "nist";
    case SourceKind::Advisories: return "advisories";
  }
  return "";
}

std::optional<SourceKind> source_kind_from_token(std::string_view token) {
  for (auto k : {SourceKind::Attack, SourceKind::Nvd, SourceKind::Nist, SourceKind::Advisories})
    if (to_token(k) == token) return k;
  return std::nullopt;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

void KbSnapshot::require_mutable() const {
  if (frozen_) throw std::logic_error("knowledge snapshot is frozen");
}

void KbSnapshot::record_source(SourceKind kind, std::string_view label, std::string_view document) {
  SourceDescriptor d{kind, std::string(label), sha256_hex(document)};
  auto same = [&](const SourceDescriptor& s) {
    return s.kind == d.kind && s.content_sha256 == d.content_sha256;
  };
  if (std::none_of(loaded_from_.begin(), loaded_from_.end(), same)) loaded_from_.push_back(std::move(d));
}

IngestReport KbSnapshot::ingest(SourceKind kind, std::string_view document, std::string_view label) {
  switch (kind) {
    case SourceKind::Attack: return ingest_attack_stix(document, label);
    case SourceKind::Nvd: return ingest_nvd_feed(document, label);
    case SourceKind::Nist: return ingest_nist_catalog(document, label);
    case SourceKind::Advisories: return ingest_advisories(document, label);
  }
  throw std::invalid_argument("unknown source kind");
}

IngestReport KbSnapshot::ingest_attack_stix(std::string_view document, std::string_view label) {
  require_mutable();
  const json doc = parse_source(document, "ATT&CK source");
  if (!doc.is_object() || string_or_empty(path_get(doc, {"type"})) != "bundle") {
    throw MalformedSource("ATT&CK source: expected a STIX bundle object");
  }
  const json* objects = path_get(doc, {"objects"});
  if (!objects || !objects->is_array()) throw MalformedSource("ATT&CK source: bundle has no objects array");

  IngestReport report;
  std::vector<std::pair<AttackTechniqueId, TechniqueRecord>> staged;
  for (const auto& obj : *objects) {
    if (!obj.is_object() || string_or_empty(path_get(obj, {"type"})) != "attack-pattern") continue;
    const auto stix_id = string_or_empty(path_get(obj, {"id"}));

    std::optional<AttackTechniqueId> technique;
    if (auto refs = path_get(obj, {"external_references"}); refs && refs->is_array()) {
      for (const auto& ref : *refs) {
        const auto ext = string_or_empty(path_get(ref, {"external_id"}));
        if (!AttackTechniqueId::matches(ext)) continue;
        const bool mitre = string_or_empty(path_get(ref, {"source_name"})).rfind("mitre-", 0) == 0;
        if (!technique || mitre) technique = AttackTechniqueId::parse(ext);
        if (mitre) break;
      }
    }
    if (!technique) {
      report.skipped.push_back(stix_id.empty() ? "attack-pattern without id" : stix_id);
      continue;
    }

    TechniqueRecord rec;
    rec.name = string_or_empty(path_get(obj, {"name"}));
    if (auto phases = path_get(obj, {"kill_chain_phases"}); phases && phases->is_array()) {
      for (const auto& ph : *phases) {
        if (string_or_empty(path_get(ph, {"kill_chain_name"})).rfind("mitre-", 0) != 0) continue;
        auto tactic = string_or_empty(path_get(ph, {"phase_name"}));
        if (!tactic.empty() && std::find(rec.tactics.begin(), rec.tactics.end(), tactic) == rec.tactics.end())
          rec.tactics.push_back(std::move(tactic));
      }
    }
    auto flag = [&](std::string_view key) {
      const json* v = path_get(obj, {key});
      return v && v->is_boolean() && v->get<bool>();
    };
    rec.deprecated = flag("x_mitre_deprecated") || flag("revoked");
    staged.emplace_back(std::move(*technique), std::move(rec));
  }

  if (staged.empty()) throw EmptySource("ATT&CK source: no usable attack-pattern objects");
  for (auto& [id, rec] : staged) techniques_.insert_or_assign(std::move(id), std::move(rec));
  report.loaded = staged.size();
  record_source(SourceKind::Attack, label, document);
  return report;
}

IngestReport KbSnapshot::ingest_nvd_feed(std::string_view document, std::string_view label) {
  require_mutable();
  const json doc = parse_source(document, "NVD feed");
  const json* items = nullptr;
  if (doc.is_array()) {
    items = &doc;
  } else if (doc.is_object()) {
    items = path_get(doc, {"CVE_Items"});
    if (!items) items = path_get(doc, {"vulnerabilities"});
  }
  if (!items || !items->is_array()) {
    throw MalformedSource("NVD feed: expected a CVE_Items or vulnerabilities array");
  }

  IngestReport report;
  std::vector<std::pair<CveId, CveRecord>> staged;
  for (std::size_t i = 0; i < items->size(); ++i) {
    const auto& item = (*items)[i];
    if (!item.is_object()) {
      report.skipped.push_back("item " + std::to_string(i) + ": not an object");
      continue;
    }
    auto view = view_nvd_item(item);
    if (!CveId::matches(view.id)) {
      report.skipped.push_back(view.id.empty() ? "item " + std::to_string(i) + ": missing id"
                                               : view.id + ": malformed CVE id");
      continue;
    }
    CveRecord rec{std::move(view.summary), std::nullopt, std::move(view.published)};
    if (view.score) {
      if (view.score->is_number() && view.score->get<double>() >= 0.0 && view.score->get<double>() <= 10.0) {
        rec.cvss_base = view.score->get<double>();
      } else {
        report.warnings.push_back(view.id + ": CVSS base score " + view.score->dump() +
                                  " outside [0, 10], dropped");
      }
    }
    staged.emplace_back(CveId::parse(view.id), std::move(rec));
  }

  for (auto& [id, rec] : staged) cves_.insert_or_assign(std::move(id), std::move(rec));
  report.loaded = staged.size();
  record_source(SourceKind::Nvd, label, document);
  return report;
}

IngestReport KbSnapshot::ingest_nist_catalog(std::string_view document, std::string_view label) {
  require_mutable();
  if (trim(document).empty()) throw MalformedSource("NIST catalog: empty document");

  struct Row {
    std::string id, family, title;
  };
  std::vector<Row> rows;
  const auto first = trim(document).front();
  if (first == '[' || first == '{') {
    const json doc = parse_source(document, "NIST catalog");
    const json* list = doc.is_array() ? &doc : path_get(doc, {"controls"});
    if (!list || !list->is_array()) throw MalformedSource("NIST catalog: expected an array of controls");
    for (const auto& c : *list) {
      rows.push_back({string_or_empty(path_get(c, {"id"})), string_or_empty(path_get(c, {"family"})),
                      string_or_empty(path_get(c, {"title"}))});
    }
  } else {
    const auto table = parse_csv(document);
    if (table.empty()) throw MalformedSource("NIST catalog: empty document");
    const auto idx = header_index(table.front());
    const auto id_col = column(idx, {"id", "control_id", "control id", "identifier"});
    const auto family_col = column(idx, {"family", "family_name", "control family"});
    const auto title_col = column(idx, {"title", "name", "control_name", "control name"});
    if (!id_col || !family_col || !title_col) {
      throw MalformedSource("NIST catalog: header must name id, family and title columns");
    }
    for (std::size_t r = 1; r < table.size(); ++r) {
      rows.push_back({cell(table[r], *id_col), cell(table[r], *family_col), cell(table[r], *title_col)});
    }
  }

  IngestReport report;
  std::map<NistControlId, ControlRecord> staged;
  for (auto& row : rows) {
    const auto id = normalize_id(row.id);
    if (!NistControlId::matches(id)) {
      report.skipped.push_back((row.id.empty() ? std::string("(blank)") : row.id) + ": malformed control id");
      continue;
    }
    auto key = NistControlId::parse(id);
    if (staged.count(key)) report.warnings.push_back(id + ": duplicate control id, last occurrence wins");
    staged.insert_or_assign(std::move(key), ControlRecord{std::move(row.family), std::move(row.title)});
  }
  for (auto& [id, rec] : staged) controls_.insert_or_assign(id, rec);
  report.loaded = staged.size();
  record_source(SourceKind::Nist, label, document);
  return report;
}

IngestReport KbSnapshot::ingest_advisories(std::string_view document, std::string_view label) {
  require_mutable();
  const auto table = parse_csv(document);
  if (table.empty()) throw MalformedSource("advisories: empty document");
  const auto idx = header_index(table.front());
  const auto source_col = column(idx, {"source"});
  const auto ident_col = column(idx, {"identifier", "id"});
  const auto title_col = column(idx, {"title"});
  const auto cves_col = column(idx, {"cve_ids", "cves"});
  if (!source_col || !ident_col || !title_col || !cves_col) {
    throw MalformedSource("advisories: header must be source,identifier,title,cve_ids");
  }

  IngestReport report;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    AdvisoryRecord rec;
    rec.source = to_lower_ascii(cell(row, *source_col)) == "cisa" ? AdvisorySource::Cisa : AdvisorySource::Other;
    rec.identifier = cell(row, *ident_col);
    rec.title = cell(row, *title_col);
    if (rec.identifier.empty()) {
      report.skipped.push_back("row " + std::to_string(r) + ": missing identifier");
      continue;
    }
    const auto cves = cell(row, *cves_col);
    std::size_t start = 0;
    while (start <= cves.size()) {
      auto end = cves.find(';', start);
      if (end == std::string::npos) end = cves.size();
      const auto token = normalize_id(trim(std::string_view(cves).substr(start, end - start)));
      if (!token.empty()) {
        if (CveId::matches(token)) rec.referenced_cve_ids.push_back(CveId::parse(token));
        else report.warnings.push_back(rec.identifier + ": ignored malformed CVE id " + token);
      }
      start = end + 1;
    }
    auto same = [&](const AdvisoryRecord& a) { return a.source == rec.source && a.identifier == rec.identifier; };
    if (auto it = std::find_if(advisories_.begin(), advisories_.end(), same); it != advisories_.end()) {
      *it = std::move(rec);
    } else {
      advisories_.push_back(std::move(rec));
    }
    ++report.loaded;
  }
  record_source(SourceKind::Advisories, label, document);
  return report;
}

const TechniqueRecord* KbSnapshot::find(const AttackTechniqueId& id) const {
  auto it = techniques_.find(id);
  return it == techniques_.end() ? nullptr : &it->second;
}

const CveRecord* KbSnapshot::find(const CveId& id) const {
  auto it = cves_.find(id);
  return it == cves_.end() ? nullptr : &it->second;
}

const ControlRecord* KbSnapshot::find(const NistControlId& id) const {
  auto it = controls_.find(id);
  return it == controls_.end() ? nullptr : &it->second;
}

ojson KbSnapshot::to_json() const {
  ojson doc;
  ojson techniques = ojson::object();
  for (const auto& [id, t] : techniques_) {
    techniques[id.str()] = {{"name", t.name}, {"tactics", t.tactics}, {"deprecated", t.deprecated}};
  }
  ojson cves = ojson::object();
  for (const auto& [id, c] : cves_) {
    cves[id.str()] = {{"summary", c.summary},
                      {"cvss_base", c.cvss_base ? ojson(*c.cvss_base) : ojson(nullptr)},
                      {"published", c.published}};
  }
  ojson controls = ojson::object();
  for (const auto& [id, c] : controls_) controls[id.str()] = {{"family", c.family}, {"title", c.title}};
  ojson advisories = ojson::array();
  for (const auto& a : advisories_) {
    ojson refs = ojson::array();
    for (const auto& c : a.referenced_cve_ids) refs.push_back(c.str());
    advisories.push_back({{"source", to_token(a.source)},
                          {"identifier", a.identifier},
                          {"title", a.title},
                          {"referenced_cve_ids", std::move(refs)}});
  }
  ojson sources = ojson::array();
  for (const auto& s : loaded_from_) {
    sources.push_back({{"kind", to_token(s.kind)}, {"label", s.label}, {"sha256", s.content_sha256}});
  }
  doc["techniques"] = std::move(techniques);
  doc["cves"] = std::move(cves);
  doc["controls"] = std::move(controls);
  doc["advisories"] = std::move(advisories);
  doc["loaded_from"] = std::move(sources);
  return doc;
}

KbSnapshot KbSnapshot::from_json(const json& doc) {
  KbSnapshot kb;
  try {
    for (const auto& [id, t] : doc.at("techniques").items()) {
      kb.techniques_.insert_or_assign(
          AttackTechniqueId::parse(id),
          TechniqueRecord{t.at("name").get<std::string>(), t.at("tactics").get<std::vector<std::string>>(),
                          t.at("deprecated").get<bool>()});
    }
    for (const auto& [id, c] : doc.at("cves").items()) {
      CveRecord rec{c.at("summary").get<std::string>(), std::nullopt, c.at("published").get<std::string>()};
      if (!c.at("cvss_base").is_null()) rec.cvss_base = c.at("cvss_base").get<double>();
      kb.cves_.insert_or_assign(CveId::parse(id), std::move(rec));
    }
    for (const auto& [id, c] : doc.at("controls").items()) {
      kb.controls_.insert_or_assign(NistControlId::parse(id),
                                    ControlRecord{c.at("family").get<std::string>(), c.at("title").get<std::string>()});
    }
    for (const auto& a : doc.at("advisories")) {
      AdvisoryRecord rec;
      rec.source = a.at("source").get<std::string>() == "cisa" ? AdvisorySource::Cisa : AdvisorySource::Other;
      rec.identifier = a.at("identifier").get<std::string>();
      rec.title = a.at("title").get<std::string>();
      for (const auto& c : a.at("referenced_cve_ids")) rec.referenced_cve_ids.push_back(CveId::parse(c.get<std::string>()));
      kb.advisories_.push_back(std::move(rec));
    }
    for (const auto& s : doc.at("loaded_from")) {
      auto kind = source_kind_from_token(s.at("kind").get<std::string>());
      if (!kind) throw MalformedSource("snapshot: unknown source kind");
      kb.loaded_from_.push_back({*kind, s.at("label").get<std::string>(), s.at("sha256").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw MalformedSource(std::string("snapshot: ") + e.what());
  } catch (const InvalidId& e) {
    throw MalformedSource(std::string("snapshot: ") + e.what());
  }
  return kb;
}

std::string KbSnapshot::content_hash() const { return sha256_hex(to_json().dump()); }

GroundingReport ground(const ThreatModel& model, const KbSnapshot& kb) {
  auto violations = validate_model(model);
  if (!violations.empty()) throw InvalidModel(std::move(violations));

  GroundingReport report;
  auto at = [](std::string base, std::size_t i, std::string_view field, std::size_t j) {
    return base + "[" + std::to_string(i) + "]." + std::string(field) + "[" + std::to_string(j) + "]";
  };
  for (std::size_t i = 0; i < model.threats.size(); ++i) {
    const auto& t = model.threats[i];
    for (std::size_t j = 0; j < t.attack_technique_ids.size(); ++j) {
      const auto& id = t.attack_technique_ids[j];
      const auto* rec = kb.find(id);
      GroundingEntry entry{at("threats", i, "attack_technique_ids", j), id.str()};
      if (!rec) report.unknown_technique_ids.push_back(std::move(entry));
      else if (rec->deprecated) report.deprecated_technique_ids.push_back(std::move(entry));
    }
    for (std::size_t j = 0; j < t.cve_ids.size(); ++j) {
      if (!kb.find(t.cve_ids[j]))
        report.unknown_cve_ids.push_back({at("threats", i, "cve_ids", j), t.cve_ids[j].str()});
    }
  }
  for (std::size_t i = 0; i < model.vulnerabilities.size(); ++i) {
    const auto& v = model.vulnerabilities[i];
    for (std::size_t j = 0; j < v.cve_ids.size(); ++j) {
      if (!kb.find(v.cve_ids[j]))
        report.unknown_cve_ids.push_back({at("vulnerabilities", i, "cve_ids", j), v.cve_ids[j].str()});
    }
  }
  for (std::size_t i = 0; i < model.mitigations.size(); ++i) {
    const auto& x = model.mitigations[i];
    for (std::size_t j = 0; j < x.nist_control_ids.size(); ++j) {
      if (!kb.find(x.nist_control_ids[j]))
        report.unknown_control_ids.push_back({at("mitigations", i, "nist_control_ids", j), x.nist_control_ids[j].str()});
    }
  }
  return report;
}

std::filesystem::path snapshot_path(const std::filesystem::path& kb_dir) { return kb_dir / "snapshot.json"; }

KbSnapshot load_snapshot(const std::filesystem::path& kb_dir) {
  const auto path = snapshot_path(kb_dir);
  if (!std::filesystem::exists(path)) return KbSnapshot{};
  const auto text = read_text_file(path);
  return KbSnapshot::from_json(parse_source(text, "snapshot"));
}

void save_snapshot(const KbSnapshot& kb, const std::filesystem::path& kb_dir) {
  write_text_file(snapshot_path(kb_dir), kb.to_json().dump(2) + "\n");
}

KbSnapshot load_sources(const std::filesystem::path& dir) {
  KbSnapshot kb;
  const std::pair<SourceKind, const char*> files[] = {{SourceKind::Attack, "attack.json"},
                                                      {SourceKind::Nvd, "nvd.json"},
                                                      {SourceKind::Nist, "nist.csv"},
                                                      {SourceKind::Advisories, "advisories.csv"}};
  for (const auto& [kind, name] : files) {
    const auto path = dir / name;
    if (std::filesystem::exists(path)) kb.ingest(kind, read_text_file(path), name);
  }
  return kb;
}

}  // namespace tmagent
