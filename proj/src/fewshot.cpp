#include "tmagent/fewshot.hpp"

#include <algorithm>
#include <set>

#include "tmagent/io.hpp"

namespace tmagent {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::string_view kModelSuffix = ".model.json";
constexpr std::string_view kMetaSuffix = ".meta.json";

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

FewShotExample load_example(const fs::path& dir, const std::string& id) {
  const auto model_file = dir / (id + std::string(kModelSuffix));
  const auto meta_file = dir / (id + std::string(kMetaSuffix));
  if (!fs::exists(meta_file)) throw CorpusInvalid(meta_file.string(), "missing metadata sidecar");

  FewShotExample ex;
  ex.example_id = id;
  try {
    ex.canonical_model = parse_canonical(read_text_file(model_file));
  } catch (const ParseError& e) {
    throw CorpusInvalid(model_file.string(), e.failure().describe());
  } catch (const InvalidModel& e) {
    throw CorpusInvalid(model_file.string(), describe(e.violations()));
  }

  json meta;
  try {
    meta = json::parse(read_text_file(meta_file));
  } catch (const json::parse_error& e) {
    throw CorpusInvalid(meta_file.string(), e.what());
  }
  if (!meta.is_object()) throw CorpusInvalid(meta_file.string(), "metadata must be a JSON object");

  const auto tags = meta.find("domain_tags");
  if (tags == meta.end() || !tags->is_array() || tags->empty()) {
    throw CorpusInvalid(meta_file.string(), "domain_tags must be a non-empty array");
  }
  for (const auto& t : *tags) {
    if (!t.is_string() || t.get<std::string>().empty())
      throw CorpusInvalid(meta_file.string(), "domain_tags entries must be non-empty strings");
    ex.domain_tags.push_back(to_lower_ascii(t.get<std::string>()));
  }
  const auto complexity = meta.find("complexity");
  if (complexity == meta.end() || !complexity->is_string())
    throw CorpusInvalid(meta_file.string(), "complexity must be simple, compound or complex");
  auto cls = prompt_class_from_token(to_lower_ascii(complexity->get<std::string>()));
  if (!cls) throw CorpusInvalid(meta_file.string(), "complexity must be simple, compound or complex");
  ex.complexity = *cls;

  const auto prompt = meta.find("prompt_text");
  if (prompt == meta.end() || !prompt->is_string() || prompt->get<std::string>().empty())
    throw CorpusInvalid(meta_file.string(), "prompt_text must be a non-empty string");
  ex.prompt_text = prompt->get<std::string>();
  return ex;
}

}  // namespace

Corpus load_corpus(const fs::path& directory) {
  if (!fs::is_directory(directory)) throw CorpusInvalid(directory.string(), "not a directory");
  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (ends_with(name, kModelSuffix)) ids.insert(name.substr(0, name.size() - kModelSuffix.size()));
  }
  if (ids.empty()) throw CorpusInvalid("", "no examples found");

  Corpus corpus;
  corpus.reserve(ids.size());
  for (const auto& id : ids) corpus.push_back(load_example(directory, id));
  return corpus;
}

std::vector<const FewShotExample*> select_examples(const SystemDescription& desc, const Corpus& corpus,
                                                   std::size_t k) {
  std::set<std::string> wanted;
  for (const auto& t : desc.tags) wanted.insert(to_lower_ascii(t));

  struct Ranked {
    std::size_t score;
    const FewShotExample* example;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(corpus.size());
  for (const auto& ex : corpus) {
    std::set<std::string> tags(ex.domain_tags.begin(), ex.domain_tags.end());
    std::size_t score = 0;
    for (const auto& t : tags) score += wanted.count(t);
    ranked.push_back({score, &ex});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.example->example_id < b.example->example_id;
  });

  std::vector<const FewShotExample*> out;
  const auto n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) out.push_back(ranked[i].example);
  return out;
}

}  // namespace tmagent
