#include "tmagent/service.hpp"

#include <charconv>
#include <iostream>

#include "tmagent/io.hpp"

#include "httplib.h"

namespace tmagent {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kJson = "application/json";

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view detail) {
  res.status = status;
  res.set_content(ojson{{"error", code}, {"detail", detail}}.dump(), kJson);
}

void send_json(httplib::Response& res, int status, const ojson& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

bool same_token(std::string_view given, std::string_view expected) {
  if (given.size() != expected.size()) return false;
  unsigned char diff = 0;
  for (std::size_t i = 0; i < given.size(); ++i) diff |= static_cast<unsigned char>(given[i] ^ expected[i]);
  return diff == 0;
}

std::vector<Answer> answers_from_json(const json& doc) {
  const json* list = &doc;
  if (doc.is_object() && doc.contains("answers")) list = &doc["answers"];
  if (!list->is_array()) throw std::invalid_argument("expected a list of {question_id, answer}");
  std::vector<Answer> out;
  for (const auto& item : *list) {
    if (!item.is_object() || !item.contains("question_id") || !item["question_id"].is_string()) {
      throw std::invalid_argument("every answer needs a string question_id");
    }
    Answer a;
    a.question_id = item["question_id"].get<std::string>();
    if (auto t = item.find("answer"); t != item.end() && !t->is_null()) {
      if (!t->is_string()) throw std::invalid_argument("answer to " + a.question_id + " must be a string");
      a.text = t->get<std::string>();
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

ojson session_resource(const Session& s) {
  ojson questions = ojson::array();
  for (const auto& q : s.pending_questions) questions.push_back({{"question_id", q.question_id}, {"text", q.text}});
  ojson out = {{"session_id", s.session_id},
               {"state", to_token(s.state)},
               {"pending_questions", std::move(questions)},
               {"revision", s.draft ? ojson(s.draft->revision) : ojson(nullptr)},
               {"repair_attempts", s.repair_attempts},
               {"clarify_rounds", s.clarify_rounds},
               {"unresolved_findings", s.unresolved_findings},
               {"failure", s.failure ? ojson(*s.failure) : ojson(nullptr)},
               {"last_seq", s.events.empty() ? 0 : s.events.back().seq}};
  out["links"] = {{"self", "/sessions/" + s.session_id},
                  {"events", "/sessions/" + s.session_id + "/events"},
                  {"model", "/sessions/" + s.session_id + "/model"}};
  return out;
}

SessionService::SessionService(std::shared_ptr<const Agent> agent, ProviderFactory providers, ServiceConfig config)
    : agent_(std::move(agent)), providers_(std::move(providers)), config_(std::move(config)) {
  if (config_.token.empty()) throw ConfigInvalid("service needs a bearer token in " + std::string(kServiceTokenEnv));
  if (!agent_ || !providers_) throw std::invalid_argument("service needs an agent and a provider factory");
  config_.agent.validate();
}

SessionService::~SessionService() { stop(); }

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::optional<Session> SessionService::snapshot(const std::string& session_id) const {
  auto e = find(session_id);
  if (!e) return std::nullopt;
  std::lock_guard lock(e->mu);
  return e->session;
}

std::size_t SessionService::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

void SessionService::launch(const std::shared_ptr<Entry>& entry) {
  if (entry->worker.joinable()) entry->worker.join();  // previous run has already finished
  entry->busy = true;
  entry->worker = std::thread([this, entry] { run(entry); });
}

void SessionService::run(std::shared_ptr<Entry> entry) {
  for (;;) {
    Session working;
    {
      std::lock_guard lock(entry->mu);
      const auto st = entry->session.state;
      if (is_terminal(st) || st == AgentState::AwaitingClarification || stopping_) {
        entry->busy = false;
        entry->cv.notify_all();
        return;
      }
      working = entry->session;
    }
    try {
      agent_->step(working, *entry->provider);
    } catch (const std::exception& e) {
      std::cerr << "session " << working.session_id << ": " << e.what() << "\n";
      std::lock_guard lock(entry->mu);
      entry->busy = false;
      entry->cv.notify_all();
      return;
    }
    std::lock_guard lock(entry->mu);
    entry->session = std::move(working);
    entry->cv.notify_all();
  }
}

int SessionService::start() {
  if (started_) throw std::logic_error("service already started");
  stopping_ = false;
  load_snapshot();
  server_ = std::make_unique<httplib::Server>();
  routes();
  int port = config_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(config_.host);
  } else if (!server_->bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) throw ConfigInvalid("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  started_ = true;
  return port;
}

void SessionService::stop() {
  if (!started_) return;
  started_ = false;
  stopping_ = true;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, e] : sessions_) e->cv.notify_all();
  }
  server_->stop();
  if (listener_.joinable()) listener_.join();
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, e] : sessions_) entries.push_back(e);
  }
  for (auto& e : entries)
    if (e->worker.joinable()) e->worker.join();
  save_snapshot();
}

void SessionService::load_snapshot() {
  if (!config_.snapshot_dir) return;
  const auto index_file = *config_.snapshot_dir / "index.json";
  if (!std::filesystem::exists(index_file)) return;
  const auto index = json::parse(read_text_file(index_file));
  for (const auto& id : index.at("sessions")) {
    const auto name = id.get<std::string>();
    auto entry = std::make_shared<Entry>();
    entry->session = replay(parse_event_log(read_text_file(*config_.snapshot_dir / (name + ".jsonl"))));
    entry->provider = providers_();
    std::lock_guard lock(entry->mu);
    sessions_[name] = entry;
    const auto st = entry->session.state;
    if (!is_terminal(st) && st != AgentState::AwaitingClarification) launch(entry);
  }
}

void SessionService::save_snapshot() const {
  if (!config_.snapshot_dir) return;
  std::filesystem::create_directories(*config_.snapshot_dir);
  json ids = json::array();
  std::lock_guard lock(mu_);
  for (const auto& [id, e] : sessions_) {
    std::lock_guard elock(e->mu);
    write_text_file(*config_.snapshot_dir / (id + ".jsonl"), serialize_event_log(e->session.events));
    ids.push_back(id);
  }
  write_text_file(*config_.snapshot_dir / "index.json", json{{"sessions", ids}}.dump(2) + "\n");
}

void SessionService::routes() {
  auto& srv = *server_;

  srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (req.path == "/healthz") return httplib::Server::HandlerResponse::Unhandled;
    const auto auth = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (auth.rfind(prefix, 0) != 0 || !same_token(std::string_view(auth).substr(prefix.size()), config_.token)) {
      res.set_header("WWW-Authenticate", "Bearer");
      send_error(res, 401, "unauthorized", "missing or wrong bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) send_error(res, 404, "not_found", "no route for " + req.path);
    else send_error(res, res.status, "error", httplib::status_message(res.status));
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send_error(res, 500, "internal", what);
  });

  srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "invalid_body", "expected a JSON object");
    SystemDescription desc;
    try {
      desc = description_from_json(body);
    } catch (const InvalidModel& e) {
      return send_error(res, 400, "invalid_description", describe(e.violations()));
    }
    std::unique_ptr<Provider> provider;
    try {
      provider = providers_();
    } catch (const std::exception& e) {
      return send_error(res, 503, "provider_unavailable", e.what());
    }
    auto entry = std::make_shared<Entry>();
    try {
      entry->session = agent_->start_session(desc, config_.agent);
    } catch (const InvalidDescription& e) {
      return send_error(res, 400, "invalid_description", describe(e.violations()));
    }
    entry->provider = std::move(provider);
    const auto resource = session_resource(entry->session);
    {
      std::lock_guard lock(mu_);
      sessions_[entry->session.session_id] = entry;
    }
    {
      std::lock_guard lock(entry->mu);
      launch(entry);
    }
    res.set_header("Location", "/sessions/" + entry->session.session_id);
    send_json(res, 201, resource);
  });

  srv.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.matches[1]);
    if (!e) return send_error(res, 404, "unknown_session", req.matches[1].str());
    std::lock_guard lock(e->mu);
    send_json(res, 200, session_resource(e->session));
  });

  srv.Post(R"(/sessions/([^/]+)/answers)", [this](const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.matches[1]);
    if (!e) return send_error(res, 404, "unknown_session", req.matches[1].str());
    const auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return send_error(res, 400, "invalid_body", "expected JSON");
    std::vector<Answer> answers;
    try {
      answers = answers_from_json(body);
    } catch (const std::invalid_argument& ex) {
      return send_error(res, 400, "invalid_body", ex.what());
    }
    std::lock_guard lock(e->mu);
    try {
      agent_->submit_answers(e->session, answers);
    } catch (const WrongState& ex) {
      return send_error(res, 409, "wrong_state", ex.what());
    } catch (const UnknownQuestionId& ex) {
      return send_error(res, 422, "unknown_question_id", ex.id());
    }
    e->cv.notify_all();
    launch(e);
    send_json(res, 202, session_resource(e->session));
  });

  srv.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.matches[1]);
    if (!e) return send_error(res, 404, "unknown_session", req.matches[1].str());
    std::uint64_t after = 0;
    if (req.has_param("after")) {
      const auto v = req.get_param_value("after");
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), after);
      if (ec != std::errc{} || ptr != v.data() + v.size()) return send_error(res, 400, "invalid_after", v);
    }
    std::unique_lock lock(e->mu);
    const auto has_new = [&] { return e->session.events.size() > after; };
    if (!has_new() && !is_terminal(e->session.state)) {
      e->cv.wait_for(lock, config_.long_poll,
                     [&] { return has_new() || is_terminal(e->session.state) || stopping_.load(); });
    }
    ojson events = ojson::array();
    for (std::size_t i = after; i < e->session.events.size(); ++i) {
      const auto& ev = e->session.events[i];
      events.push_back({{"seq", ev.seq}, {"at", format_rfc3339_ms(ev.at)}, {"kind", ev.kind}, {"payload", ev.payload}});
    }
    ojson page = {{"session_id", e->session.session_id},
                  {"state", to_token(e->session.state)},
                  {"events", std::move(events)}};
    lock.unlock();
    send_json(res, 200, page);
  });

  srv.Get(R"(/sessions/([^/]+)/model)", [this](const httplib::Request& req, httplib::Response& res) {
    auto e = find(req.matches[1]);
    if (!e) return send_error(res, 404, "unknown_session", req.matches[1].str());
    std::lock_guard lock(e->mu);
    if (e->session.state != AgentState::Delivered) {
      return send_error(res, 409, "not_delivered", "session is " + std::string(to_token(e->session.state)));
    }
    res.set_content(render_canonical(*e->session.draft), kJson);
  });
}

}  // namespace tmagent
