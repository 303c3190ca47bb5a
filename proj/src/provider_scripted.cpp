#include <stdexcept>

#include "tmagent/io.hpp"
#include "tmagent/provider.hpp"

namespace tmagent {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_token(ProviderErrorKind k) {
  switch (k) {
    case ProviderErrorKind::Timeout: return "timeout";
    case ProviderErrorKind::RemoteRefusal: return "remote_refusal";
    case ProviderErrorKind::Exhausted: return "exhausted";
  }
  return "";
}

ProviderError::ProviderError(ProviderErrorKind kind, int attempts, std::string detail, std::string body)
    : std::runtime_error(std::string(to_token(kind)) + " after " + std::to_string(attempts) +
                         (attempts == 1 ? " attempt: " : " attempts: ") + detail),
      kind_(kind),
      attempts_(attempts),
      body_(std::move(body)) {}

ojson to_json(const ProviderExchange& x) {
  return {{"provider", x.provider_name},
          {"attempt", x.attempt},
          {"latency_ms", x.latency_ms},
          {"completed_at", format_rfc3339_ms(x.completed_at)},
          {"request_text", x.request_text},
          {"response_text", x.response_text}};
}

ProviderExchange exchange_from_json(const json& doc) {
  ProviderExchange x;
  x.provider_name = doc.at("provider").get<std::string>();
  x.attempt = doc.at("attempt").get<int>();
  x.latency_ms = doc.at("latency_ms").get<std::int64_t>();
  auto at = parse_rfc3339_ms(doc.at("completed_at").get<std::string>());
  if (!at) throw std::runtime_error("exchange: bad completed_at");
  x.completed_at = *at;
  x.request_text = doc.at("request_text").get<std::string>();
  x.response_text = doc.at("response_text").get<std::string>();
  return x;
}

Script Script::from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw std::runtime_error("script: expected an object");
  Script s;
  s.name = doc.value("name", std::string("script"));
  const auto responses = doc.find("responses");
  if (responses == doc.end() || !responses->is_array()) throw std::runtime_error("script: missing responses array");
  for (std::size_t i = 0; i < responses->size(); ++i) {
    const auto& r = (*responses)[i];
    const auto where = "script response " + std::to_string(i);
    if (!r.is_object()) throw std::runtime_error(where + ": expected an object");
    ScriptEntry e;
    if (auto m = r.find("match"); m != r.end() && !m->is_null()) e.match = m->get<std::string>();
    if (auto text = r.find("response"); text != r.end()) {
      e.response = text->get<std::string>();
    } else if (auto file = r.find("response_file"); file != r.end()) {
      e.response = read_text_file(base_dir / file->get<std::string>());
    } else {
      throw std::runtime_error(where + ": needs response or response_file");
    }
    const auto delay = r.value("delay_ms", 0LL);
    if (delay < 0) throw std::runtime_error(where + ": delay_ms must be non-negative");
    e.delay = std::chrono::milliseconds(delay);
    s.entries.push_back(std::move(e));
  }
  return s;
}

Script Script::load(const std::filesystem::path& file) {
  try {
    return from_json(json::parse(read_text_file(file)), file.parent_path());
  } catch (const json::exception& e) {
    throw std::runtime_error(file.string() + ": " + e.what());
  }
}

ScriptedProvider::ScriptedProvider(Script script, std::shared_ptr<Clock> clock, std::chrono::milliseconds deadline)
    : script_(std::move(script)), clock_(std::move(clock)), deadline_(deadline) {
  if (!clock_) throw std::invalid_argument("scripted provider needs a clock");
}

std::size_t ScriptedProvider::consumed() const {
  std::lock_guard lock(mu_);
  return cursor_;
}

ProviderExchange ScriptedProvider::complete(std::string_view prompt) {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  std::lock_guard lock(mu_);
  if (cursor_ >= script_.entries.size()) {
    throw ProviderError(ProviderErrorKind::Exhausted, 1, "script '" + script_.name + "' has no responses left");
  }
  const auto& entry = script_.entries[cursor_];
  if (entry.match && prompt.find(*entry.match) == std::string_view::npos) {
    throw ProviderError(ProviderErrorKind::RemoteRefusal, 1,
                        "request does not contain '" + *entry.match + "' expected by script entry " +
                            std::to_string(cursor_));
  }

  const auto start = clock_->monotonic();
  if (entry.delay > deadline_) {
    clock_->sleep_for(deadline_);
    throw ProviderError(ProviderErrorKind::Timeout, 1, "deadline of " + std::to_string(deadline_.count()) + " ms exceeded");
  }
  clock_->sleep_for(entry.delay);
  ++cursor_;

  ProviderExchange x;
  x.request_text = std::string(prompt);
  x.response_text = entry.response;
  x.latency_ms = (clock_->monotonic() - start).count();
  x.attempt = 1;
  x.provider_name = name();
  x.completed_at = clock_->wall_now();
  return x;
}

}  // namespace tmagent
