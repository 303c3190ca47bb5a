// One PASS/FAIL line per acceptance criterion; exits non-zero on any failure.

#include <chrono>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "cli.hpp"
#include "support.hpp"
#include "tmagent/service.hpp"

using namespace tmtest;
using namespace std::chrono_literals;
using json = nlohmann::json;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream why;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      if (!ok) why << "; ";
      why << what;
      ok = false;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::istringstream in;
  std::ostringstream out, err;
  const int code = tmagent::cli::run(args, in, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

fs::path scratch(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("tmagent-acceptance-" + tag + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void prompt_classification(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<std::string, PromptClass>> cases = {
      {"bench/simple.txt", PromptClass::Simple},
      {"bench/compound.txt", PromptClass::Compound},
      {"bench/complex.txt", PromptClass::Complex}};
  int hits = 0;
  for (const auto& [file, want] : cases) {
    SystemDescription d{"Drone Delivery Management System", trim(read_text_file(fixture(file))), {}, {}};
    const auto got = classify_prompt(d, *lexicon());
    if (got == want) ++hits;
    else c.expect(false, file + " classified " + std::string(to_token(got)));
  }
  const auto elapsed = seconds_since(t0);
  c.expect(hits == 3, std::to_string(hits) + "/3 correct");
  c.expect(elapsed < 1.0, "took " + std::to_string(elapsed) + " s");
}

void schema_round_trip(Check& c) {
  ModelGen gen(2024);
  int failures = 0;
  for (int i = 0; i < 200; ++i) {
    const auto m = gen.next();
    try {
      if (parse_canonical(render_canonical(m)) != m) ++failures;
    } catch (const std::exception&) {
      ++failures;
    }
  }
  c.expect(failures == 0, std::to_string(failures) + "/200 models failed the round trip");
}

void reviewer_rule_matrix(Check& c) {
  c.expect(review(load_model(fixture("review/base.model.json")), *fixture_kb()).empty(), "base fixture has findings");
  for (int r = 1; r <= 7; ++r) {
    const auto rule = static_cast<RuleId>(r);
    const auto findings = review(load_model(fixture("review/r" + std::to_string(r) + ".model.json")), *fixture_kb());
    bool triggered = false, other_blocking = false;
    for (const auto& f : findings) {
      if (f.rule_id == rule) triggered = true;
      else if (f.severity == FindingSeverity::Blocking) other_blocking = true;
    }
    c.expect(triggered, "R" + std::to_string(r) + " not triggered");
    c.expect(!other_blocking, "R" + std::to_string(r) + " fixture triggers another blocking rule");
  }
}

void end_to_end_determinism(Check& c) {
  struct Expect {
    const char* script;
    int repairs;
    int rounds;
  };
  for (const auto& e : {Expect{"happy_path", 0, 0}, Expect{"one_repair", 1, 0}, Expect{"one_clarify_round", 0, 1}}) {
    const auto a = run_fixture(e.script);
    const auto b = run_fixture(e.script);
    const std::string name = e.script;
    c.expect(a.session.state == AgentState::Delivered, name + " ended " + std::string(to_token(a.session.state)));
    c.expect(a.session.repair_attempts == e.repairs, name + " repair_attempts " + std::to_string(a.session.repair_attempts));
    c.expect(a.session.clarify_rounds == e.rounds, name + " clarify_rounds " + std::to_string(a.session.clarify_rounds));
    c.expect(serialize_event_log(a.session.events) == serialize_event_log(b.session.events),
             name + " event logs differ between runs");
  }
}

void provider_call_bound(Check& c) {
  const AgentConfig cfg;
  for (const char* script : {"happy_path", "one_repair", "one_clarify_round", "garbage"}) {
    const auto r = run_fixture(script, cfg);
    c.expect(r.session.provider_calls <= cfg.call_bound(),
             std::string(script) + " made " + std::to_string(r.session.provider_calls) + " calls");
  }
  c.expect(cfg.max_repairs == 2, "default A_max is not 2");
  const auto g = run_fixture("garbage", cfg);
  c.expect(g.session.state == AgentState::Failed, "garbage run did not fail");
  c.expect(g.session.provider_calls == 3, "garbage run made " + std::to_string(g.session.provider_calls) + " calls");
}

void kb_ingestion(Check& c) {
  const auto kb = load_sources(data_dir() / "kb");
  c.expect(kb.techniques().size() == 11, std::to_string(kb.techniques().size()) + " techniques");
  c.expect(kb.cves().size() == 20, std::to_string(kb.cves().size()) + " CVEs");
  c.expect(kb.controls().size() == 15, std::to_string(kb.controls().size()) + " controls");
  c.expect(kb.find(CveId::parse("CVE-2022-30190")) != nullptr, "Follina CVE missing");

  auto m = load_model(fixture("review/base.model.json"));
  m.threats[0].attack_technique_ids.push_back(AttackTechniqueId::parse("T9876"));
  const auto report = ground(m, kb);
  c.expect(report.size() == 1, std::to_string(report.size()) + " grounding entries");
  c.expect(report.unknown_technique_ids.size() == 1 && report.unknown_technique_ids[0].id == "T9876",
           "unknown technique not named");
}

void bench_harness(Check& c) {
  const auto dir = scratch("bench");
  const auto report_file = dir / "report.json";
  std::string out;
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run_cli({"--provider", "scripted", "--script", fixture("scripts/bench_100ms.json").string(), "bench",
                        "--prompts", fixture("bench").string(), "--repeat", "5", "--report", report_file.string()});
  const auto elapsed = seconds_since(t0);
  c.expect(code == 0, "bench exited " + std::to_string(code));
  if (code == 0) {
    const auto report = json::parse(read_text_file(report_file));
    c.expect(report["classes"].size() == 3, "expected three classes");
    for (const auto& cls : report["classes"]) {
      const double mean = cls["mean_latency_ms"];
      c.expect(cls["trials"] == 5, "trials != 5");
      c.expect(mean >= 100.0 && mean <= 150.0,
               cls["class"].get<std::string>() + " mean " + std::to_string(mean) + " ms");
    }
    const std::string note = report["reference_note"];
    c.expect(note.find("20") != std::string::npos && note.find("30") != std::string::npos &&
                 note.find(" s") != std::string::npos,
             "reference annotation missing");
  }
  c.expect(elapsed < 30.0, "took " + std::to_string(elapsed) + " s");
  fs::remove_all(dir);
}

void cli_contract(Check& c) {
  const auto dir = scratch("cli");
  const auto input = fixture("drone.txt").string();
  const auto out_file = (dir / "m.json").string();
  int code = run_cli({"--provider", "scripted", "--script", fixture("scripts/happy_path.json").string(), "generate",
                  "--input", input, "--out", out_file});
  c.expect(code == 0, "happy path exited " + std::to_string(code));
  if (code == 0) {
    try {
      const auto m = parse_canonical(read_text_file(out_file));
      c.expect(validate_model(m).empty(), "written model has schema violations");
    } catch (const std::exception& e) {
      c.expect(false, std::string("written model does not validate: ") + e.what());
    }
  }

  ::unsetenv("THREATGPT_API_KEY");
  std::string err;
  code = run_cli({"--provider", "remote", "generate", "--input", input}, nullptr, &err);
  c.expect(code == 1, "missing key exited " + std::to_string(code));
  c.expect(err.find("THREATGPT_API_KEY") != std::string::npos, "missing-key message does not name the variable");

  code = run_cli({"--provider", "scripted", "--script", fixture("scripts/garbage.json").string(), "generate", "--input",
              input});
  c.expect(code == 2, "garbage exited " + std::to_string(code));
  fs::remove_all(dir);
}

void service_conformance(Check& c) {
  const auto dir = scratch("svc");
  const auto script = fixture("scripts/one_clarify_round.json");
  const auto answers_file = fixture("answers/one_clarify_round.json");
  const auto cli_out = dir / "cli.json";
  const int code = run_cli({"--provider", "scripted", "--script", script.string(), "generate", "--input",
                        fixture("drone.txt").string(), "--answers", answers_file.string(), "--out",
                        cli_out.string()});
  c.expect(code == 0, "CLI run exited " + std::to_string(code));

  auto clock = make_system_clock();
  auto agent = std::make_shared<const Agent>(
      AgentDeps{fixture_kb(), corpus(), lexicon(), templates(), clock, std::make_shared<RandomIds>()});
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.token = "acceptance";
  cfg.long_poll = 2s;
  SessionService svc(
      agent, [&] { return std::make_unique<ScriptedProvider>(Script::load(script), clock); }, cfg);
  const int port = svc.start();
  httplib::Client http("127.0.0.1", port);
  http.set_bearer_token_auth("acceptance");
  http.set_read_timeout(10, 0);

  const json body = {{"title", "Drone Delivery Management System"},
                     {"narrative", trim(read_text_file(fixture("drone.txt")))}};
  auto created = http.Post("/sessions", body.dump(), "application/json");
  if (!created || created->status != 201) {
    c.expect(false, "POST /sessions failed");
    return;
  }
  const std::string id = json::parse(created->body)["session_id"];

  auto poll_until = [&](std::string_view state) -> json {
    std::uint64_t after = 0;
    for (int i = 0; i < 50; ++i) {
      auto page = http.Get("/sessions/" + id + "/events?after=" + std::to_string(after));
      if (!page || page->status != 200) return {};
      const auto doc = json::parse(page->body);
      after += doc["events"].size();
      if (doc["state"] == state) return json::parse(http.Get("/sessions/" + id)->body);
      if (doc["state"] == "failed" || doc["state"] == "delivered") return json::parse(http.Get("/sessions/" + id)->body);
    }
    return {};
  };

  const auto paused = poll_until("awaiting_clarification");
  c.expect(paused.value("state", "") == "awaiting_clarification", "session never paused for clarification");
  json answers = json::array();
  const auto answer_doc = json::parse(read_text_file(answers_file));
  for (const auto& [qid, text] : answer_doc["rounds"][0].items())
    answers.push_back({{"question_id", qid}, {"answer", text}});
  auto posted = http.Post("/sessions/" + id + "/answers", answers.dump(), "application/json");
  c.expect(posted && posted->status == 202, "POST /answers rejected");
  if (!posted || posted->status != 202) return;

  const auto done = poll_until("delivered");
  c.expect(done.value("state", "") == "delivered", "session not delivered");
  auto model = http.Get("/sessions/" + id + "/model");
  c.expect(model && model->status == 200, "GET /model failed");
  if (model && model->status == 200 && code == 0)
    c.expect(model->body == read_text_file(cli_out), "service model differs from the CLI model");
  svc.stop();
  fs::remove_all(dir);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"prompt classification", prompt_classification},
      {"schema round trip", schema_round_trip},
      {"reviewer rule matrix", reviewer_rule_matrix},
      {"end-to-end determinism", end_to_end_determinism},
      {"provider-call bound", provider_call_bound},
      {"knowledge base ingestion", kb_ingestion},
      {"bench harness", bench_harness},
      {"CLI contract", cli_contract},
      {"service conformance", service_conformance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    std::cout << (c.ok ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first;
    if (!c.ok) std::cout << ": " << c.why.str();
    std::cout << "\n" << std::flush;
    if (!c.ok) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
