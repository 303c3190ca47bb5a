#pragma once

// Threat-model domain schema: the five analysis sections (assets, entry
// points, attacker profiles, threats and vulnerabilities, mitigations) plus
// the system description they were derived from, and the canonical JSON
// serialization shared by the on-disk format, the service payload and the
// LLM output contract.

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmagent/ids.hpp"
#include "tmagent/timeutil.hpp"

namespace tmagent {

enum class ComponentKind { Application, Server, Datastore, Network, Device, Human, Other };
enum class Level { Low, Medium, High, Critical };  // ordinal: Low < Critical
enum class Channel { Web, Api, NetworkPort, Wireless, Physical, MobileApp, Other };
enum class Exposure { Public, Authenticated, Internal, PhysicalProximity };
enum class Capability { Opportunistic, Skilled, Organized, NationState };
enum class Access { External, Insider, Physical };
enum class Stride {
  Spoofing,
  Tampering,
  Repudiation,
  InformationDisclosure,
  DenialOfService,
  ElevationOfPrivilege,
};

template <class E>
struct EnumTokens;

#define TMAGENT_ENUM_TOKENS(E, N, ...)                                                   \
  template <>                                                                            \
  struct EnumTokens<E> {                                                                 \
    static constexpr std::string_view name = #E;                                         \
    static constexpr std::array<std::pair<E, std::string_view>, N> table{{__VA_ARGS__}}; \
  }

TMAGENT_ENUM_TOKENS(ComponentKind, 7, {ComponentKind::Application, "application"},
                    {ComponentKind::Server, "server"}, {ComponentKind::Datastore, "datastore"},
                    {ComponentKind::Network, "network"}, {ComponentKind::Device, "device"},
                    {ComponentKind::Human, "human"}, {ComponentKind::Other, "other"});
TMAGENT_ENUM_TOKENS(Level, 4, {Level::Low, "low"}, {Level::Medium, "medium"}, {Level::High, "high"},
                    {Level::Critical, "critical"});
TMAGENT_ENUM_TOKENS(Channel, 7, {Channel::Web, "web"}, {Channel::Api, "api"},
                    {Channel::NetworkPort, "network_port"}, {Channel::Wireless, "wireless"},
                    {Channel::Physical, "physical"}, {Channel::MobileApp, "mobile_app"},
                    {Channel::Other, "other"});
TMAGENT_ENUM_TOKENS(Exposure, 4, {Exposure::Public, "public"}, {Exposure::Authenticated, "authenticated"},
                    {Exposure::Internal, "internal"},
                    {Exposure::PhysicalProximity, "physical_proximity"});
TMAGENT_ENUM_TOKENS(Capability, 4, {Capability::Opportunistic, "opportunistic"},
                    {Capability::Skilled, "skilled"}, {Capability::Organized, "organized"},
                    {Capability::NationState, "nation_state"});
TMAGENT_ENUM_TOKENS(Access, 3, {Access::External, "external"}, {Access::Insider, "insider"},
                    {Access::Physical, "physical"});
TMAGENT_ENUM_TOKENS(Stride, 6, {Stride::Spoofing, "spoofing"}, {Stride::Tampering, "tampering"},
                    {Stride::Repudiation, "repudiation"},
                    {Stride::InformationDisclosure, "information_disclosure"},
                    {Stride::DenialOfService, "denial_of_service"},
                    {Stride::ElevationOfPrivilege, "elevation_of_privilege"});

#undef TMAGENT_ENUM_TOKENS

template <class E>
constexpr std::string_view to_token(E value) {
  for (const auto& [v, tok] : EnumTokens<E>::table)
    if (v == value) return tok;
  return {};
}

template <class E>
constexpr std::optional<E> from_token(std::string_view token) {
  for (const auto& [v, tok] : EnumTokens<E>::table)
    if (tok == token) return v;
  return std::nullopt;
}

template <class E>
constexpr const auto& all_values() {
  return EnumTokens<E>::table;
}

struct ComponentHint {
  std::string name;
  ComponentKind kind = ComponentKind::Other;
  std::optional<std::string> detail;
  friend bool operator==(const ComponentHint&, const ComponentHint&) = default;
};

struct SystemDescription {
  std::string title;
  std::string narrative;
  std::vector<ComponentHint> components;
  std::vector<std::string> tags;
  friend bool operator==(const SystemDescription&, const SystemDescription&) = default;
};

struct Asset {
  std::string id;
  std::string name;
  std::string description;
  Level sensitivity = Level::Medium;
  friend bool operator==(const Asset&, const Asset&) = default;
};

struct EntryPoint {
  std::string id;
  std::string name;
  Channel channel = Channel::Other;
  Exposure exposed_to = Exposure::Public;
  friend bool operator==(const EntryPoint&, const EntryPoint&) = default;
};

struct AttackerProfile {
  std::string id;
  std::string label;
  std::string motivation;
  Capability capability = Capability::Opportunistic;
  Access access = Access::External;
  friend bool operator==(const AttackerProfile&, const AttackerProfile&) = default;
};

struct Threat {
  std::string id;
  std::string title;
  std::string description;
  Stride stride = Stride::Spoofing;
  std::vector<AttackTechniqueId> attack_technique_ids;
  std::vector<CveId> cve_ids;
  std::vector<std::string> target_asset_ids;
  std::vector<std::string> via_entry_point_ids;
  Level severity = Level::Medium;
  friend bool operator==(const Threat&, const Threat&) = default;
};

struct Vulnerability {
  std::string id;
  std::string description;
  std::vector<CveId> cve_ids;
  std::vector<std::string> affected_asset_ids;
  friend bool operator==(const Vulnerability&, const Vulnerability&) = default;
};

struct Mitigation {
  std::string id;
  std::string description;
  std::vector<NistControlId> nist_control_ids;
  std::vector<std::string> addresses_threat_ids;
  friend bool operator==(const Mitigation&, const Mitigation&) = default;
};

struct ThreatModel {
  std::string model_id;
  SystemDescription system;
  std::vector<Asset> assets;
  std::vector<EntryPoint> entry_points;
  std::vector<AttackerProfile> attacker_profiles;
  std::vector<Threat> threats;
  std::vector<Vulnerability> vulnerabilities;
  std::vector<Mitigation> mitigations;
  long long revision = 0;
  Timestamp produced_at{};
  friend bool operator==(const ThreatModel&, const ThreatModel&) = default;
};

struct SchemaViolation {
  std::string path;  // e.g. "threats[0].target_asset_ids"
  std::string rule;
  friend bool operator==(const SchemaViolation&, const SchemaViolation&) = default;
};

std::string describe(const std::vector<SchemaViolation>& violations);

/// Syntax-level failure: where the document stopped making sense and what was
/// expected there.
struct ParseFailure {
  std::size_t offset = 0;
  std::string expected;
  std::string describe() const;
};

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(ParseFailure failure);
  const ParseFailure& failure() const noexcept { return failure_; }

 private:
  ParseFailure failure_;
};

/// The document parsed, but the model it describes breaks a schema rule.
class InvalidModel : public std::runtime_error {
 public:
  explicit InvalidModel(std::vector<SchemaViolation> violations);
  const std::vector<SchemaViolation>& violations() const noexcept { return violations_; }

 private:
  std::vector<SchemaViolation> violations_;
};

/// Ids are caller-supplied short tokens, compared after upper-casing.
std::string normalize_id(std::string_view id);
std::string to_lower_ascii(std::string_view s);

std::vector<SchemaViolation> validate_description(const SystemDescription& desc,
                                                  std::string_view path_prefix = "");
std::vector<SchemaViolation> validate_model(const ThreatModel& model);

nlohmann::ordered_json description_to_json(const SystemDescription& desc);
/// Tolerant reader: unknown fields are ignored. Throws InvalidModel with
/// field paths for missing or mistyped fields.
SystemDescription description_from_json(const nlohmann::json& doc);

nlohmann::ordered_json model_to_json(const ThreatModel& model);

/// Deterministic pretty-printed JSON; throws InvalidModel if
/// validate_model(model) is non-empty.
std::string render_canonical(const ThreatModel& model);

/// Throws ParseError for malformed JSON or a document that is not a threat
/// model at all, and InvalidModel for field-level violations.
ThreatModel parse_canonical(std::string_view text);

}  // namespace tmagent
