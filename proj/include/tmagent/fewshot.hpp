#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmagent/model.hpp"
#include "tmagent/prompt_class.hpp"

namespace tmagent {

struct FewShotExample {
  std::string example_id;
  std::vector<std::string> domain_tags;
  PromptClass complexity = PromptClass::Complex;
  std::string prompt_text;
  ThreatModel canonical_model;
};

class CorpusInvalid : public std::runtime_error {
 public:
  CorpusInvalid(std::string file, std::string violation)
      : std::runtime_error("corpus invalid: " + (file.empty() ? violation : file + ": " + violation)),
        file_(std::move(file)),
        violation_(std::move(violation)) {}
  const std::string& file() const noexcept { return file_; }
  const std::string& violation() const noexcept { return violation_; }

 private:
  std::string file_;
  std::string violation_;
};

using Corpus = std::vector<FewShotExample>;

/// Reads every `<id>.model.json` + `<id>.meta.json` pair in `directory`,
/// sorted by example id. Any missing sidecar, parse failure or schema
/// violation aborts the load with the offending file named.
Corpus load_corpus(const std::filesystem::path& directory);

/// Ranks by |desc.tags ∩ domain_tags| (descending), ties by example_id, and
/// returns the first min(k, corpus.size()).
std::vector<const FewShotExample*> select_examples(const SystemDescription& desc, const Corpus& corpus,
                                                   std::size_t k);

constexpr std::size_t kDefaultExampleCount = 3;

}  // namespace tmagent
