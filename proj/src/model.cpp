#include "tmagent/model.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace tmagent {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 10> kTopLevelKeys = {
    "model_id", "system",   "assets",          "entry_points", "attacker_profiles",
    "threats",  "vulnerabilities", "mitigations", "revision",     "produced_at"};

std::string index_path(std::string_view base, std::size_t i) {
  return std::string(base) + "[" + std::to_string(i) + "]";
}

std::string field_path(std::string_view base, std::string_view field) {
  if (base.empty()) return std::string(field);
  return std::string(base) + "." + std::string(field);
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

bool is_id_token(std::string_view s) {
  if (s.empty() || s.size() > 32) return false;
  if (!std::isalnum(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return (std::isdigit(c) || std::isupper(c) || c == '-' || c == '_' || c == '.');
  });
}

bool is_tag_token(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c) || std::islower(c) || c == '-' || c == '_';
  });
}

// Collects ids of one list, reporting empties, bad tokens and duplicates.
std::set<std::string> collect_ids(std::vector<SchemaViolation>& out, std::string_view list,
                                  const std::vector<std::string>& ids) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto path = field_path(index_path(list, i), "id");
    if (!is_id_token(ids[i])) {
      out.push_back({path, "id must be a short uppercase token"});
      continue;
    }
    if (!seen.insert(ids[i]).second) out.push_back({path, "duplicate id " + ids[i]});
  }
  return seen;
}

void check_refs(std::vector<SchemaViolation>& out, const std::string& path,
                const std::vector<std::string>& refs, const std::set<std::string>& known,
                std::string_view target, bool require_nonempty) {
  if (require_nonempty && refs.empty()) {
    out.push_back({path, "must reference at least one " + std::string(target)});
    return;
  }
  for (const auto& ref : refs) {
    if (!known.count(ref)) {
      out.push_back({path, "unknown " + std::string(target) + " id " + ref});
    }
  }
}

template <class T, class F>
std::vector<std::string> ids_of(const std::vector<T>& items, F&& get) {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(get(item));
  return out;
}

// Field-level JSON reader that records violations instead of throwing, so one
// pass reports every problem with its path.
class Reader {
 public:
  explicit Reader(bool strict) : strict_(strict) {}

  std::vector<SchemaViolation>& violations() { return violations_; }

  void fail(std::string path, std::string rule) {
    violations_.push_back({std::move(path), std::move(rule)});
  }

  bool expect_object(const json& v, const std::string& path) {
    if (v.is_object()) return true;
    fail(path, "expected an object");
    return false;
  }

  void reject_unknown(const json& obj, const std::string& path,
                      std::initializer_list<std::string_view> known) {
    if (!strict_) return;
    for (const auto& item : obj.items()) {
      if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
        fail(field_path(path, item.key()), "unknown field");
      }
    }
  }

  const json* member(const json& obj, std::string_view key, const std::string& path) {
    auto it = obj.find(std::string(key));
    if (it == obj.end()) {
      fail(field_path(path, key), "missing field");
      return nullptr;
    }
    return &*it;
  }

  std::string text(const json& obj, std::string_view key, const std::string& path) {
    const json* v = member(obj, key, path);
    if (!v) return {};
    if (!v->is_string()) {
      fail(field_path(path, key), "expected a string");
      return {};
    }
    return v->get<std::string>();
  }

  std::optional<std::string> optional_text(const json& obj, std::string_view key,
                                           const std::string& path) {
    auto it = obj.find(std::string(key));
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) {
      fail(field_path(path, key), "expected a string or null");
      return std::nullopt;
    }
    return it->get<std::string>();
  }

  std::string id(const json& obj, std::string_view key, const std::string& path) {
    return normalize_id(text(obj, key, path));
  }

  template <class E>
  E enumeration(const json& obj, std::string_view key, const std::string& path, E fallback) {
    const json* v = member(obj, key, path);
    if (!v) return fallback;
    if (!v->is_string()) {
      fail(field_path(path, key), "expected a string token");
      return fallback;
    }
    const auto token = v->get<std::string>();
    if (auto e = from_token<E>(token)) return *e;
    fail(field_path(path, key), "'" + token + "' is not a valid " +
                                    std::string(EnumTokens<E>::name) + " token");
    return fallback;
  }

  const json* array(const json& obj, std::string_view key, const std::string& path) {
    const json* v = member(obj, key, path);
    if (!v) return nullptr;
    if (!v->is_array()) {
      fail(field_path(path, key), "expected an array");
      return nullptr;
    }
    return v;
  }

  std::vector<std::string> strings(const json& obj, std::string_view key, const std::string& path,
                                   bool as_id) {
    std::vector<std::string> out;
    const json* arr = array(obj, key, path);
    if (!arr) return out;
    const auto base = field_path(path, key);
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto& el = (*arr)[i];
      if (!el.is_string()) {
        fail(index_path(base, i), "expected a string");
        continue;
      }
      out.push_back(as_id ? normalize_id(el.get<std::string>()) : el.get<std::string>());
    }
    return out;
  }

  template <class Id>
  std::vector<Id> framework_ids(const json& obj, std::string_view key, const std::string& path) {
    std::vector<Id> out;
    const auto base = field_path(path, key);
    const auto raw = strings(obj, key, path, true);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      try {
        out.push_back(Id::parse(raw[i]));
      } catch (const InvalidId& e) {
        fail(index_path(base, i), e.what());
      }
    }
    return out;
  }

  template <class T, class F>
  std::vector<T> list(const json& obj, std::string_view key, const std::string& path, F&& decode) {
    std::vector<T> out;
    const json* arr = array(obj, key, path);
    if (!arr) return out;
    const auto base = field_path(path, key);
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto p = index_path(base, i);
      if (!expect_object((*arr)[i], p)) continue;
      out.push_back(decode((*arr)[i], p));
    }
    return out;
  }

 private:
  bool strict_;
  std::vector<SchemaViolation> violations_;
};

SystemDescription read_description(Reader& r, const json& obj, const std::string& path) {
  SystemDescription d;
  if (!r.expect_object(obj, path)) return d;
  r.reject_unknown(obj, path, {"title", "narrative", "components", "tags"});
  d.title = r.text(obj, "title", path);
  d.narrative = r.text(obj, "narrative", path);
  if (obj.contains("components")) {
    d.components = r.list<ComponentHint>(obj, "components", path, [&](const json& o, const std::string& p) {
      r.reject_unknown(o, p, {"name", "kind", "detail"});
      ComponentHint c;
      c.name = r.text(o, "name", p);
      c.kind = o.contains("kind") ? r.enumeration(o, "kind", p, ComponentKind::Other)
                                  : ComponentKind::Other;
      c.detail = r.optional_text(o, "detail", p);
      return c;
    });
  }
  if (obj.contains("tags")) {
    for (auto& tag : r.strings(obj, "tags", path, false)) d.tags.push_back(to_lower_ascii(tag));
  }
  return d;
}

ojson to_json(const ComponentHint& c) {
  ojson o;
  o["name"] = c.name;
  o["kind"] = to_token(c.kind);
  o["detail"] = c.detail ? ojson(*c.detail) : ojson(nullptr);
  return o;
}

template <class Id>
ojson id_array(const std::vector<Id>& ids) {
  ojson arr = ojson::array();
  for (const auto& id : ids) arr.push_back(id.str());
  return arr;
}

ParseFailure failure_from(const json::parse_error& e, std::size_t size) {
  std::string what = e.what();
  std::string expected = "well-formed JSON";
  if (auto pos = what.find("; expected "); pos != std::string::npos) {
    expected = what.substr(pos + 11);
  } else if (auto dash = what.find(" - "); dash != std::string::npos) {
    expected = "valid JSON (" + what.substr(dash + 3) + ")";
  }
  const std::size_t offset = e.byte == 0 ? 0 : std::min<std::size_t>(e.byte - 1, size);
  return ParseFailure{offset, expected};
}

}  // namespace

std::string describe(const std::vector<SchemaViolation>& violations) {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].path << ": " << violations[i].rule;
  }
  return os.str();
}

std::string ParseFailure::describe() const {
  return "expected " + expected + " at offset " + std::to_string(offset);
}

ParseError::ParseError(ParseFailure failure)
    : std::runtime_error("parse failure: " + failure.describe()), failure_(std::move(failure)) {}

InvalidModel::InvalidModel(std::vector<SchemaViolation> violations)
    : std::runtime_error("invalid model: " + tmagent::describe(violations)),
      violations_(std::move(violations)) {}

std::string normalize_id(std::string_view id) {
  std::string out(id);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<SchemaViolation> validate_description(const SystemDescription& desc,
                                                  std::string_view prefix) {
  std::vector<SchemaViolation> out;
  if (is_blank(desc.title)) out.push_back({field_path(prefix, "title"), "must be non-empty"});
  if (is_blank(desc.narrative)) out.push_back({field_path(prefix, "narrative"), "must be non-empty"});
  std::set<std::string> names;
  const auto components = field_path(prefix, "components");
  for (std::size_t i = 0; i < desc.components.size(); ++i) {
    const auto path = field_path(index_path(components, i), "name");
    const auto& name = desc.components[i].name;
    if (is_blank(name)) {
      out.push_back({path, "must be non-empty"});
    } else if (!names.insert(to_lower_ascii(name)).second) {
      out.push_back({path, "duplicate component name '" + name + "'"});
    }
  }
  const auto tags = field_path(prefix, "tags");
  for (std::size_t i = 0; i < desc.tags.size(); ++i) {
    if (!is_tag_token(desc.tags[i])) out.push_back({index_path(tags, i), "must be a lowercase token"});
  }
  return out;
}

std::vector<SchemaViolation> validate_model(const ThreatModel& m) {
  std::vector<SchemaViolation> out;
  if (is_blank(m.model_id)) out.push_back({"model_id", "must be non-empty"});
  for (auto& v : validate_description(m.system, "system")) out.push_back(std::move(v));
  if (m.revision < 0) out.push_back({"revision", "must be non-negative"});

  if (m.revision > 0) {
    const std::pair<std::string_view, bool> sections[] = {
        {"assets", m.assets.empty()},
        {"entry_points", m.entry_points.empty()},
        {"attacker_profiles", m.attacker_profiles.empty()},
        {"threats", m.threats.empty()},
        {"mitigations", m.mitigations.empty()},
    };
    for (const auto& [name, empty] : sections)
      if (empty) out.push_back({std::string(name), "must be non-empty after revision 0"});
  }

  const auto asset_ids = collect_ids(out, "assets", ids_of(m.assets, [](auto& a) { return a.id; }));
  const auto entry_ids =
      collect_ids(out, "entry_points", ids_of(m.entry_points, [](auto& e) { return e.id; }));
  collect_ids(out, "attacker_profiles", ids_of(m.attacker_profiles, [](auto& p) { return p.id; }));
  const auto threat_ids = collect_ids(out, "threats", ids_of(m.threats, [](auto& t) { return t.id; }));
  collect_ids(out, "vulnerabilities", ids_of(m.vulnerabilities, [](auto& v) { return v.id; }));
  collect_ids(out, "mitigations", ids_of(m.mitigations, [](auto& x) { return x.id; }));

  for (std::size_t i = 0; i < m.assets.size(); ++i)
    if (is_blank(m.assets[i].name))
      out.push_back({field_path(index_path("assets", i), "name"), "must be non-empty"});
  for (std::size_t i = 0; i < m.entry_points.size(); ++i)
    if (is_blank(m.entry_points[i].name))
      out.push_back({field_path(index_path("entry_points", i), "name"), "must be non-empty"});
  for (std::size_t i = 0; i < m.attacker_profiles.size(); ++i)
    if (is_blank(m.attacker_profiles[i].label))
      out.push_back({field_path(index_path("attacker_profiles", i), "label"), "must be non-empty"});

  for (std::size_t i = 0; i < m.threats.size(); ++i) {
    const auto& t = m.threats[i];
    const auto base = index_path("threats", i);
    if (is_blank(t.title)) out.push_back({field_path(base, "title"), "must be non-empty"});
    check_refs(out, field_path(base, "target_asset_ids"), t.target_asset_ids, asset_ids, "asset", true);
    check_refs(out, field_path(base, "via_entry_point_ids"), t.via_entry_point_ids, entry_ids,
               "entry point", false);
  }
  for (std::size_t i = 0; i < m.vulnerabilities.size(); ++i) {
    check_refs(out, field_path(index_path("vulnerabilities", i), "affected_asset_ids"),
               m.vulnerabilities[i].affected_asset_ids, asset_ids, "asset", true);
  }
  for (std::size_t i = 0; i < m.mitigations.size(); ++i) {
    check_refs(out, field_path(index_path("mitigations", i), "addresses_threat_ids"),
               m.mitigations[i].addresses_threat_ids, threat_ids, "threat", true);
  }
  return out;
}

ojson description_to_json(const SystemDescription& d) {
  ojson o;
  o["title"] = d.title;
  o["narrative"] = d.narrative;
  o["components"] = ojson::array();
  for (const auto& c : d.components) o["components"].push_back(to_json(c));
  o["tags"] = d.tags;
  return o;
}

SystemDescription description_from_json(const json& doc) {
  Reader r(false);
  auto d = read_description(r, doc, "");
  if (!r.violations().empty()) throw InvalidModel(std::move(r.violations()));
  return d;
}

ojson model_to_json(const ThreatModel& m) {
  ojson o;
  o["model_id"] = m.model_id;
  o["system"] = description_to_json(m.system);

  o["assets"] = ojson::array();
  for (const auto& a : m.assets) {
    o["assets"].push_back({{"id", a.id},
                           {"name", a.name},
                           {"description", a.description},
                           {"sensitivity", to_token(a.sensitivity)}});
  }
  o["entry_points"] = ojson::array();
  for (const auto& e : m.entry_points) {
    o["entry_points"].push_back({{"id", e.id},
                                 {"name", e.name},
                                 {"channel", to_token(e.channel)},
                                 {"exposed_to", to_token(e.exposed_to)}});
  }
  o["attacker_profiles"] = ojson::array();
  for (const auto& p : m.attacker_profiles) {
    o["attacker_profiles"].push_back({{"id", p.id},
                                      {"label", p.label},
                                      {"motivation", p.motivation},
                                      {"capability", to_token(p.capability)},
                                      {"access", to_token(p.access)}});
  }
  o["threats"] = ojson::array();
  for (const auto& t : m.threats) {
    ojson item;
    item["id"] = t.id;
    item["title"] = t.title;
    item["description"] = t.description;
    item["stride"] = to_token(t.stride);
    item["attack_technique_ids"] = id_array(t.attack_technique_ids);
    item["cve_ids"] = id_array(t.cve_ids);
    item["target_asset_ids"] = t.target_asset_ids;
    item["via_entry_point_ids"] = t.via_entry_point_ids;
    item["severity"] = to_token(t.severity);
    o["threats"].push_back(std::move(item));
  }
  o["vulnerabilities"] = ojson::array();
  for (const auto& v : m.vulnerabilities) {
    ojson item;
    item["id"] = v.id;
    item["description"] = v.description;
    item["cve_ids"] = id_array(v.cve_ids);
    item["affected_asset_ids"] = v.affected_asset_ids;
    o["vulnerabilities"].push_back(std::move(item));
  }
  o["mitigations"] = ojson::array();
  for (const auto& x : m.mitigations) {
    ojson item;
    item["id"] = x.id;
    item["description"] = x.description;
    item["nist_control_ids"] = id_array(x.nist_control_ids);
    item["addresses_threat_ids"] = x.addresses_threat_ids;
    o["mitigations"].push_back(std::move(item));
  }
  o["revision"] = m.revision;
  o["produced_at"] = format_rfc3339(m.produced_at);
  return o;
}

std::string render_canonical(const ThreatModel& m) {
  auto violations = validate_model(m);
  if (!violations.empty()) throw InvalidModel(std::move(violations));
  return model_to_json(m).dump(2) + "\n";
}

ThreatModel parse_canonical(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(failure_from(e, text.size()));
  }
  if (!doc.is_object()) throw ParseError({0, "a JSON object with threat-model keys"});
  for (auto key : kTopLevelKeys) {
    if (!doc.contains(std::string(key))) {
      throw ParseError({0, "top-level key '" + std::string(key) + "'"});
    }
  }

  Reader r(true);
  for (const auto& item : doc.items()) {
    if (std::find(kTopLevelKeys.begin(), kTopLevelKeys.end(), item.key()) == kTopLevelKeys.end())
      r.fail(item.key(), "unknown top-level key");
  }

  ThreatModel m;
  m.model_id = r.text(doc, "model_id", "");
  m.system = read_description(r, doc["system"], "system");

  m.assets = r.list<Asset>(doc, "assets", "", [&](const json& o, const std::string& p) {
    r.reject_unknown(o, p, {"id", "name", "description", "sensitivity"});
    return Asset{r.id(o, "id", p), r.text(o, "name", p), r.text(o, "description", p),
                 r.enumeration(o, "sensitivity", p, Level::Medium)};
  });
  m.entry_points = r.list<EntryPoint>(doc, "entry_points", "", [&](const json& o, const std::string& p) {
    r.reject_unknown(o, p, {"id", "name", "channel", "exposed_to"});
    return EntryPoint{r.id(o, "id", p), r.text(o, "name", p),
                      r.enumeration(o, "channel", p, Channel::Other),
                      r.enumeration(o, "exposed_to", p, Exposure::Public)};
  });
  m.attacker_profiles =
      r.list<AttackerProfile>(doc, "attacker_profiles", "", [&](const json& o, const std::string& p) {
        r.reject_unknown(o, p, {"id", "label", "motivation", "capability", "access"});
        return AttackerProfile{r.id(o, "id", p), r.text(o, "label", p), r.text(o, "motivation", p),
                               r.enumeration(o, "capability", p, Capability::Opportunistic),
                               r.enumeration(o, "access", p, Access::External)};
      });
  m.threats = r.list<Threat>(doc, "threats", "", [&](const json& o, const std::string& p) {
    r.reject_unknown(o, p,
                     {"id", "title", "description", "stride", "attack_technique_ids", "cve_ids",
                      "target_asset_ids", "via_entry_point_ids", "severity"});
    Threat t;
    t.id = r.id(o, "id", p);
    t.title = r.text(o, "title", p);
    t.description = r.text(o, "description", p);
    t.stride = r.enumeration(o, "stride", p, Stride::Spoofing);
    t.attack_technique_ids = r.framework_ids<AttackTechniqueId>(o, "attack_technique_ids", p);
    t.cve_ids = r.framework_ids<CveId>(o, "cve_ids", p);
    t.target_asset_ids = r.strings(o, "target_asset_ids", p, true);
    t.via_entry_point_ids = r.strings(o, "via_entry_point_ids", p, true);
    t.severity = r.enumeration(o, "severity", p, Level::Medium);
    return t;
  });
  m.vulnerabilities = r.list<Vulnerability>(doc, "vulnerabilities", "", [&](const json& o, const std::string& p) {
    r.reject_unknown(o, p, {"id", "description", "cve_ids", "affected_asset_ids"});
    Vulnerability v;
    v.id = r.id(o, "id", p);
    v.description = r.text(o, "description", p);
    v.cve_ids = r.framework_ids<CveId>(o, "cve_ids", p);
    v.affected_asset_ids = r.strings(o, "affected_asset_ids", p, true);
    return v;
  });
  m.mitigations = r.list<Mitigation>(doc, "mitigations", "", [&](const json& o, const std::string& p) {
    r.reject_unknown(o, p, {"id", "description", "nist_control_ids", "addresses_threat_ids"});
    Mitigation x;
    x.id = r.id(o, "id", p);
    x.description = r.text(o, "description", p);
    x.nist_control_ids = r.framework_ids<NistControlId>(o, "nist_control_ids", p);
    x.addresses_threat_ids = r.strings(o, "addresses_threat_ids", p, true);
    return x;
  });

  const auto& revision = doc["revision"];
  if (revision.is_number_integer()) {
    m.revision = revision.get<long long>();
  } else {
    r.fail("revision", "expected an integer");
  }
  const auto& produced = doc["produced_at"];
  if (!produced.is_string()) {
    r.fail("produced_at", "expected an RFC 3339 timestamp string");
  } else if (auto t = parse_rfc3339(produced.get<std::string>())) {
    m.produced_at = *t;
  } else {
    r.fail("produced_at", "'" + produced.get<std::string>() + "' is not an RFC 3339 timestamp");
  }

  if (!r.violations().empty()) throw InvalidModel(std::move(r.violations()));
  auto violations = validate_model(m);
  if (!violations.empty()) throw InvalidModel(std::move(violations));
  return m;
}

}  // namespace tmagent
