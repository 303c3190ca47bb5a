#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "tmagent/agent.hpp"
#include "tmagent/io.hpp"

namespace tmtest {

namespace fs = std::filesystem;
using namespace tmagent;

inline fs::path data_dir() { return TMAGENT_DATA_DIR; }
inline fs::path fixture_dir() { return TMAGENT_FIXTURE_DIR; }
inline fs::path fixture(const std::string& rel) { return fixture_dir() / rel; }

inline std::shared_ptr<const KbSnapshot> fixture_kb() {
  static const auto kb = [] {
    auto k = load_sources(data_dir() / "kb");
    k.freeze();
    return std::make_shared<const KbSnapshot>(std::move(k));
  }();
  return kb;
}

inline std::shared_ptr<const PromptingLexicon> lexicon() {
  static const auto lex =
      std::make_shared<const PromptingLexicon>(PromptingLexicon::load(data_dir() / "prompting_lexicon.json"));
  return lex;
}

inline std::shared_ptr<const ReviewTemplates> templates() {
  static const auto t =
      std::make_shared<const ReviewTemplates>(ReviewTemplates::load(data_dir() / "review_templates.json"));
  return t;
}

inline std::shared_ptr<const Corpus> corpus() {
  static const auto c = std::make_shared<const Corpus>(load_corpus(data_dir() / "corpus"));
  return c;
}

inline ThreatModel load_model(const fs::path& file) { return parse_canonical(read_text_file(file)); }

inline SystemDescription drone_description() {
  SystemDescription d;
  d.narrative = trim(read_text_file(fixture("drone.txt")));
  d.title = "Drone Delivery Management System";
  return d;
}

/// Agent over the fixture resources with a virtual clock and sequential ids,
/// so runs are reproducible byte for byte.
struct Rig {
  std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>();
  Agent agent{AgentDeps{fixture_kb(), corpus(), lexicon(), templates(), clock, std::make_shared<SequentialIds>()}};

  ScriptedProvider provider(const std::string& script_name) {
    return ScriptedProvider(Script::load(fixture("scripts/" + script_name + ".json")), clock);
  }
};

struct RunResult {
  Session session;
  std::size_t consumed = 0;
};

inline RunResult run_fixture(const std::string& script_name, AgentConfig config = {}) {
  Rig rig;
  auto provider = rig.provider(script_name);
  std::unique_ptr<AnswerSource> answers;
  const auto answer_file = fixture("answers/" + script_name + ".json");
  if (fs::exists(answer_file)) answers = std::make_unique<ScriptedAnswers>(ScriptedAnswers::load(answer_file));
  else answers = std::make_unique<NoAnswers>();
  auto session = rig.agent.start_session(drone_description(), config);
  rig.agent.run_to_completion(session, provider, *answers);
  return {std::move(session), provider.consumed()};
}

// ---------------------------------------------------------------------------
// Random valid models for property tests.

class ModelGen {
 public:
  explicit ModelGen(std::uint64_t seed) : rng_(seed) {}

  ThreatModel next() {
    ThreatModel m;
    m.model_id = "m-" + token(8);
    m.system.title = text(1, 6);
    m.system.narrative = text(5, 40);
    for (int i = 0, n = pick(0, 3); i < n; ++i) {
      ComponentHint c;
      c.name = text(1, 3) + " " + std::to_string(i);
      c.kind = any<ComponentKind>();
      if (coin()) c.detail = text(0, 8);
      m.system.components.push_back(std::move(c));
    }
    for (int i = 0, n = pick(0, 3); i < n; ++i) m.system.tags.push_back(lower_token(pick(1, 8)) + std::to_string(i));

    m.revision = coin() ? 0 : pick(1, 1000);
    const bool must_fill = m.revision > 0;
    const int assets = pick(must_fill ? 1 : 0, 5);
    const int eps = pick(must_fill ? 1 : 0, 4);
    for (int i = 0; i < assets; ++i) m.assets.push_back({"A" + std::to_string(i + 1), text(1, 4), text(0, 12), any<Level>()});
    for (int i = 0; i < eps; ++i)
      m.entry_points.push_back({"E" + std::to_string(i + 1), text(1, 4), any<Channel>(), any<Exposure>()});
    for (int i = 0, n = pick(must_fill ? 1 : 0, 3); i < n; ++i)
      m.attacker_profiles.push_back({"P" + std::to_string(i + 1), text(1, 3), text(0, 6), any<Capability>(), any<Access>()});
    const int threats = (assets > 0 && eps > 0) ? pick(must_fill ? 1 : 0, 6) : 0;
    for (int i = 0; i < threats; ++i) {
      Threat t;
      t.id = "T" + std::to_string(i + 1);
      t.title = text(1, 6);
      t.description = text(0, 20);
      t.stride = any<Stride>();
      for (int k = 0, n = pick(0, 2); k < n; ++k) t.attack_technique_ids.push_back(technique());
      for (int k = 0, n = pick(0, 2); k < n; ++k) t.cve_ids.push_back(cve());
      t.target_asset_ids = subset("A", assets);
      t.via_entry_point_ids = subset("E", eps, false);
      t.severity = any<Level>();
      m.threats.push_back(std::move(t));
    }
    for (int i = 0, n = assets > 0 ? pick(0, 3) : 0; i < n; ++i) {
      Vulnerability v;
      v.id = "V" + std::to_string(i + 1);
      v.description = text(1, 10);
      for (int k = 0, c = pick(0, 2); k < c; ++k) v.cve_ids.push_back(cve());
      v.affected_asset_ids = subset("A", assets);
      m.vulnerabilities.push_back(std::move(v));
    }
    for (int i = 0, n = threats > 0 ? pick(must_fill ? 1 : 0, 4) : 0; i < n; ++i) {
      Mitigation x;
      x.id = "M" + std::to_string(i + 1);
      x.description = text(1, 10);
      for (int k = 0, c = pick(0, 3); k < c; ++k) x.nist_control_ids.push_back(control());
      x.addresses_threat_ids = subset("T", threats);
      m.mitigations.push_back(std::move(x));
    }
    m.produced_at = Timestamp{std::chrono::seconds(pick(0, 2'000'000'000))};
    return m;
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return pick(0, 1) == 1; }

  template <class E>
  E any() {
    const auto& table = all_values<E>();
    return table[static_cast<std::size_t>(pick(0, static_cast<int>(table.size()) - 1))].first;
  }

  std::string lower_token(int n) {
    static const char* alphabet = "abcdefghijklmnopqrstuvwxyz0123456789_-";
    std::string s;
    for (int i = 0; i < n; ++i) s += alphabet[pick(0, 37)];
    return s;
  }

  std::string token(int n) {
    std::string s;
    for (int i = 0; i < n; ++i) s += static_cast<char>('a' + pick(0, 25));
    return s;
  }

  // Words include quoting, escapes, non-ASCII text and fence-like sequences.
  std::string text(int min_words, int max_words) {
    static const std::vector<std::string> words = {
        "drone", "server", "\"quoted\"", "back\\slash", "naïve", "日本語", "tab\there", "line\nbreak",
        "```", "{braces}", "[list]", "emoji😀", "100%", "a&b", "<tag>", "O'Neil", "résumé", "x"};
    std::string s;
    const int n = pick(min_words, max_words);
    for (int i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += words[static_cast<std::size_t>(pick(0, static_cast<int>(words.size()) - 1))];
    }
    if (min_words > 0 && s.find_first_not_of(" \t\n") == std::string::npos) s = "x";
    return s;
  }

  std::string digits(int n) {
    std::string s;
    for (int i = 0; i < n; ++i) s += static_cast<char>('0' + pick(0, 9));
    return s;
  }

  AttackTechniqueId technique() {
    return AttackTechniqueId::parse("T" + digits(4) + (coin() ? "." + digits(3) : ""));
  }
  CveId cve() { return CveId::parse("CVE-" + digits(4) + "-" + digits(pick(4, 7))); }
  NistControlId control() {
    std::string s{static_cast<char>('A' + pick(0, 25)), static_cast<char>('A' + pick(0, 25))};
    s += "-" + std::to_string(pick(1, 99));
    if (coin()) s += "(" + std::to_string(pick(1, 30)) + ")";
    return NistControlId::parse(s);
  }

  std::vector<std::string> subset(const std::string& prefix, int n, bool non_empty = true) {
    std::vector<std::string> out;
    for (int i = 1; i <= n; ++i)
      if (coin()) out.push_back(prefix + std::to_string(i));
    if (out.empty() && non_empty && n > 0) out.push_back(prefix + std::to_string(pick(1, n)));
    return out;
  }

  std::mt19937_64 rng_;
};

}  // namespace tmtest
