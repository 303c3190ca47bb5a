#pragma once

// Framework knowledge base: ATT&CK techniques, NVD CVE records, NIST controls
// and static advisories, loaded from local files into an in-memory snapshot
// that grounds the framework ids cited by a threat model.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tmagent/ids.hpp"
#include "tmagent/model.hpp"

namespace tmagent {

class MalformedSource : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptySource : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TechniqueRecord {
  std::string name;
  std::vector<std::string> tactics;
  bool deprecated = false;
  friend bool operator==(const TechniqueRecord&, const TechniqueRecord&) = default;
};

struct CveRecord {
  std::string summary;
  std::optional<double> cvss_base;  // within [0, 10] when present
  std::string published;            // YYYY-MM-DD, empty if unknown
  friend bool operator==(const CveRecord&, const CveRecord&) = default;
};

struct ControlRecord {
  std::string family;
  std::string title;
  friend bool operator==(const ControlRecord&, const ControlRecord&) = default;
};

enum class AdvisorySource { Cisa, Other };

struct AdvisoryRecord {
  AdvisorySource source = AdvisorySource::Other;
  std::string identifier;
  std::string title;
  std::vector<CveId> referenced_cve_ids;
  friend bool operator==(const AdvisoryRecord&, const AdvisoryRecord&) = default;
};

enum class SourceKind { Attack, Nvd, Nist, Advisories };

std::string_view to_token(SourceKind kind);
std::optional<SourceKind> source_kind_from_token(std::string_view token);

struct SourceDescriptor {
  SourceKind kind = SourceKind::Attack;
  std::string label;         // file name or caller-supplied label
  std::string content_sha256;
  friend bool operator==(const SourceDescriptor&, const SourceDescriptor&) = default;
};

/// Outcome of one ingest call. `loaded` counts the records taken from this
/// document; `skipped` names rejected items; `warnings` records lossy fixes.
struct IngestReport {
  std::size_t loaded = 0;
  std::vector<std::string> skipped;
  std::vector<std::string> warnings;
};

struct GroundingEntry {
  std::string path;  // model field path of the id occurrence
  std::string id;
  friend bool operator==(const GroundingEntry&, const GroundingEntry&) = default;
};

struct GroundingReport {
  std::vector<GroundingEntry> unknown_technique_ids;
  std::vector<GroundingEntry> unknown_cve_ids;
  std::vector<GroundingEntry> unknown_control_ids;
  std::vector<GroundingEntry> deprecated_technique_ids;

  bool empty() const {
    return unknown_technique_ids.empty() && unknown_cve_ids.empty() && unknown_control_ids.empty() &&
           deprecated_technique_ids.empty();
  }
  std::size_t size() const {
    return unknown_technique_ids.size() + unknown_cve_ids.size() + unknown_control_ids.size() +
           deprecated_technique_ids.size();
  }
};

/// Built single-threaded through the ingest_* calls, then frozen. After
/// freeze() every mutating call throws std::logic_error; lookups are safe from
/// any number of threads.
class KbSnapshot {
 public:
  IngestReport ingest_attack_stix(std::string_view document, std::string_view label = "attack");
  IngestReport ingest_nvd_feed(std::string_view document, std::string_view label = "nvd");
  IngestReport ingest_nist_catalog(std::string_view document, std::string_view label = "nist");
  IngestReport ingest_advisories(std::string_view document, std::string_view label = "advisories");
  IngestReport ingest(SourceKind kind, std::string_view document, std::string_view label);

  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }

  const std::map<AttackTechniqueId, TechniqueRecord>& techniques() const { return techniques_; }
  const std::map<CveId, CveRecord>& cves() const { return cves_; }
  const std::map<NistControlId, ControlRecord>& controls() const { return controls_; }
  const std::vector<AdvisoryRecord>& advisories() const { return advisories_; }
  const std::vector<SourceDescriptor>& loaded_from() const { return loaded_from_; }

  const TechniqueRecord* find(const AttackTechniqueId& id) const;
  const CveRecord* find(const CveId& id) const;
  const ControlRecord* find(const NistControlId& id) const;

  /// SHA-256 over the serialized snapshot content.
  std::string content_hash() const;

  nlohmann::ordered_json to_json() const;
  static KbSnapshot from_json(const nlohmann::json& doc);

 private:
  void require_mutable() const;
  void record_source(SourceKind kind, std::string_view label, std::string_view document);

  std::map<AttackTechniqueId, TechniqueRecord> techniques_;
  std::map<CveId, CveRecord> cves_;
  std::map<NistControlId, ControlRecord> controls_;
  std::vector<AdvisoryRecord> advisories_;
  std::vector<SourceDescriptor> loaded_from_;
  bool frozen_ = false;
};

/// Lists exactly the framework ids cited by `model` that the snapshot does
/// not know, or knows only as deprecated. Throws InvalidModel if the model
/// fails validation.
GroundingReport ground(const ThreatModel& model, const KbSnapshot& kb);

std::string sha256_hex(std::string_view data);

/// Snapshot persistence used by `kb ingest` and at engine start-up:
/// `<dir>/snapshot.json`.
std::filesystem::path snapshot_path(const std::filesystem::path& kb_dir);
KbSnapshot load_snapshot(const std::filesystem::path& kb_dir);
void save_snapshot(const KbSnapshot& kb, const std::filesystem::path& kb_dir);

/// Ingests the bundled fixture sources (attack.json, nvd.json, nist.csv,
/// advisories.csv) found in `sources_dir`; missing files are skipped.
KbSnapshot load_sources(const std::filesystem::path& sources_dir);

}  // namespace tmagent
