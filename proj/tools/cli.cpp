#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "tmagent/agent.hpp"
#include "tmagent/io.hpp"
#include "tmagent/service.hpp"

#ifndef TMAGENT_DATA_DIR
#define TMAGENT_DATA_DIR "data"
#endif

namespace tmagent::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// Raised for anything the user can fix by changing flags, config or inputs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalFlags {
  std::string config;
  std::string kb_dir;
  std::string corpus_dir;
  std::string data_dir;
  std::string provider;
  std::string script;
  std::string trace;
};

struct Resources {
  std::shared_ptr<const KbSnapshot> kb;
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<const PromptingLexicon> lexicon;
  std::shared_ptr<const ReviewTemplates> templates;
};

Settings resolve_settings(const GlobalFlags& g) {
  Settings s;
  if (!g.config.empty()) s = Settings::load(g.config);
  if (!g.kb_dir.empty()) s.set("paths.kb_dir", g.kb_dir);
  if (!g.corpus_dir.empty()) s.set("paths.corpus_dir", g.corpus_dir);
  if (!g.data_dir.empty()) s.set("paths.data_dir", g.data_dir);
  if (!g.provider.empty()) s.set("provider.kind", g.provider);
  if (!g.script.empty()) s.set("provider.script_path", g.script);
  return s;
}

fs::path data_dir(const Settings& s) { return s.get_or("paths.data_dir", TMAGENT_DATA_DIR); }

std::shared_ptr<const KbSnapshot> load_kb(const Settings& s) {
  KbSnapshot kb;
  if (auto dir = s.get("paths.kb_dir")) {
    if (!fs::exists(snapshot_path(*dir))) {
      throw UsageError("no knowledge base snapshot in " + *dir + " (run `kb ingest` first)");
    }
    kb = load_snapshot(*dir);
  } else {
    kb = load_sources(data_dir(s) / "kb");
  }
  kb.freeze();
  return std::make_shared<const KbSnapshot>(std::move(kb));
}

Resources load_resources(const Settings& s) {
  Resources r;
  r.kb = load_kb(s);
  r.corpus = std::make_shared<const Corpus>(load_corpus(s.get_or("paths.corpus_dir", (data_dir(s) / "corpus").string())));
  r.lexicon = std::make_shared<const PromptingLexicon>(PromptingLexicon::load(data_dir(s) / "prompting_lexicon.json"));
  r.templates = std::make_shared<const ReviewTemplates>(ReviewTemplates::load(data_dir(s) / "review_templates.json"));
  return r;
}

AgentConfig agent_config(const Settings& s) {
  AgentConfig c;
  c.max_repairs = static_cast<int>(s.get_int("agent.max_repairs", c.max_repairs));
  c.max_clarify_rounds = static_cast<int>(s.get_int("agent.max_clarify_rounds", c.max_clarify_rounds));
  c.examples = static_cast<std::size_t>(s.get_int("agent.examples", static_cast<long long>(c.examples)));
  c.max_questions = static_cast<std::size_t>(s.get_int("agent.max_questions", static_cast<long long>(c.max_questions)));
  c.unit_limit = static_cast<std::size_t>(s.get_int("agent.unit_limit", static_cast<long long>(c.unit_limit)));
  c.validate();
  return c;
}

/// Builds a fresh provider per call. The remote key is checked eagerly so a
/// missing key fails before any work starts.
ProviderFactory provider_factory(const Settings& s, std::shared_ptr<Clock> clock) {
  const auto kind = s.get_or("provider.kind", "remote");
  if (kind == "scripted") {
    const auto path = s.get("provider.script_path");
    if (!path) throw UsageError("scripted provider needs --script or provider.script_path");
    auto script = std::make_shared<const Script>(Script::load(*path));
    const auto deadline = std::chrono::seconds(s.get_int("provider.deadline_s", 60));
    return [script, clock, deadline] { return std::make_unique<ScriptedProvider>(*script, clock, deadline); };
  }
  if (kind == "remote") {
    RemoteConfig rc;
    rc.endpoint = s.get_or("provider.endpoint", std::string(kDefaultEndpoint));
    rc.api_key = env_value(kApiKeyEnv).value_or("");
    rc.deadline = std::chrono::seconds(s.get_int("provider.deadline_s", 60));
    rc.retries = static_cast<int>(s.get_int("provider.retries", 2));
    rc.backoff = std::chrono::milliseconds(s.get_int("provider.backoff_ms", 1000));
    RemoteProvider probe(rc, clock);  // validates key, endpoint and limits
    return [rc, clock] { return std::make_unique<RemoteProvider>(rc, clock); };
  }
  throw UsageError("provider.kind must be remote or scripted, not '" + kind + "'");
}

std::string first_sentence(std::string_view text) {
  auto line = trim(text.substr(0, text.find('\n')));
  if (auto dot = line.find(". "); dot != std::string::npos) line.resize(dot);
  if (!line.empty() && line.back() == '.') line.pop_back();
  if (line.size() > 80) {
    auto cut = line.rfind(' ', 80);
    line.resize(cut == std::string::npos ? 80 : cut);
  }
  return line;
}

/// `.json` files hold a description object; anything else is free text whose
/// first sentence becomes the title.
SystemDescription read_description(const fs::path& file) {
  const auto text = read_text_file(file);
  if (file.extension() == ".json") {
    try {
      return description_from_json(json::parse(text));
    } catch (const json::exception& e) {
      throw UsageError(file.string() + ": " + e.what());
    } catch (const InvalidModel& e) {
      throw UsageError(file.string() + ": " + describe(e.violations()));
    }
  }
  SystemDescription d;
  d.narrative = trim(text);
  d.title = first_sentence(d.narrative);
  return d;
}

SystemDescription prompt_description(std::istream& in, std::ostream& out) {
  out << "Describe the system to model (finish with an empty line):\n" << std::flush;
  std::string text, line;
  while (std::getline(in, line) && !trim(line).empty()) text += line + "\n";
  SystemDescription d;
  d.narrative = trim(text);
  d.title = first_sentence(d.narrative);
  return d;
}

/// Prints each question and reads one line per question after a `Q<k>>`
/// prompt. A blank line leaves the question unanswered.
class StreamAnswers final : public AnswerSource {
 public:
  StreamAnswers(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

  std::vector<Answer> answer(const std::vector<ClarificationQuestion>& questions) override {
    out_ << "\nThe draft needs clarification:\n";
    std::vector<Answer> answers;
    for (const auto& q : questions) {
      out_ << q.question_id << " [" << to_token(q.rule_id) << "]: " << q.text << "\n"
           << q.question_id << "> " << std::flush;
      std::string line;
      if (!std::getline(in_, line)) break;
      if (!trim(line).empty()) answers.push_back({q.question_id, trim(line)});
    }
    return answers;
  }

 private:
  std::istream& in_;
  std::ostream& out_;
};

void write_trace(const std::string& path, const Session& s) {
  if (!path.empty()) write_text_file(path, serialize_event_log(s.events));
}

// ---------------------------------------------------------------------------

struct GenerateFlags {
  std::string input;
  std::string out;
  std::string answers;
  bool interactive = false;
  bool fixed_clock = false;
};

int cmd_generate(const GlobalFlags& g, const GenerateFlags& f, std::istream& in, std::ostream& out,
                 std::ostream& err) {
  auto settings = resolve_settings(g);
  auto config = agent_config(settings);
  const bool headless = !f.input.empty() && !f.interactive;
  if (headless && f.answers.empty()) config.max_clarify_rounds = 0;

  std::shared_ptr<Clock> clock = f.fixed_clock ? std::shared_ptr<Clock>(std::make_shared<ManualClock>())
                                               : make_system_clock();
  auto providers = provider_factory(settings, clock);
  auto res = load_resources(settings);

  std::unique_ptr<AnswerSource> answers;
  if (!f.answers.empty()) answers = std::make_unique<ScriptedAnswers>(ScriptedAnswers::load(f.answers));
  else if (headless) answers = std::make_unique<NoAnswers>();
  else answers = std::make_unique<StreamAnswers>(in, out);

  const auto desc = f.input.empty() ? prompt_description(in, out) : read_description(f.input);
  std::shared_ptr<SessionIdSource> ids;
  if (f.fixed_clock) ids = std::make_shared<SequentialIds>();
  else ids = std::make_shared<RandomIds>();
  Agent agent({res.kb, res.corpus, res.lexicon, res.templates, clock, ids});

  Session session;
  try {
    session = agent.start_session(desc, config);
  } catch (const InvalidDescription& e) {
    throw UsageError(e.what());
  }
  auto provider = providers();
  agent.run_to_completion(session, *provider, *answers);
  write_trace(g.trace, session);

  if (session.state == AgentState::Failed) {
    err << "generation failed: " << session.failure.value_or("unknown cause") << "\n";
    return kDomainFailure;
  }
  const auto doc = render_canonical(*session.draft);
  if (f.out.empty()) out << doc;
  else write_text_file(f.out, doc);
  err << "delivered " << session.draft->model_id << " revision " << session.draft->revision << " ("
      << session.provider_calls << " provider calls, " << session.repair_attempts << " repairs, "
      << session.clarify_rounds << " clarification rounds)\n";
  if (session.unresolved_findings) err << "note: delivered with unresolved review findings\n";
  return kOk;
}

int cmd_kb_ingest(const GlobalFlags& g, const std::string& source, const std::string& file, std::ostream& out,
                  std::ostream& err) {
  const auto settings = resolve_settings(g);
  const auto kb_dir = settings.get("paths.kb_dir");
  if (!kb_dir) throw UsageError("kb ingest needs --kb-dir (or paths.kb_dir in the config)");
  const auto kind = source_kind_from_token(source);
  if (!kind) throw UsageError("--source must be attack, nvd, nist or advisories");

  std::string text;
  try {
    text = read_text_file(file);
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  auto kb = load_snapshot(*kb_dir);
  IngestReport report;
  try {
    report = kb.ingest(*kind, text, fs::path(file).filename().string());
  } catch (const MalformedSource& e) {
    err << "MalformedSource: " << e.what() << "\n";
    return kUsage;
  } catch (const EmptySource& e) {
    err << "EmptySource: " << e.what() << "\n";
    return kUsage;
  }
  fs::create_directories(*kb_dir);
  save_snapshot(kb, *kb_dir);

  static const std::map<SourceKind, const char*> noun = {{SourceKind::Attack, "techniques"},
                                                          {SourceKind::Nvd, "CVEs"},
                                                          {SourceKind::Nist, "controls"},
                                                          {SourceKind::Advisories, "advisories"}};
  out << noun.at(*kind) << " loaded: " << report.loaded << "\n";
  if (!report.skipped.empty()) err << "skipped " << report.skipped.size() << " record(s)\n";
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  return kOk;
}

int cmd_validate(const GlobalFlags& g, const std::string& path, std::ostream& out, std::ostream& err) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::runtime_error& e) {
    err << e.what() << "\n";
    return kUsage;
  }
  ThreatModel model;
  try {
    model = parse_canonical(text);
  } catch (const ParseError& e) {
    err << path << ": not a threat model: " << e.failure().describe() << "\n";
    return kUsage;
  } catch (const InvalidModel& e) {
    out << "schema violations:\n";
    for (const auto& v : e.violations()) out << "  " << v.path << ": " << v.rule << "\n";
    return kDomainFailure;
  }
  const auto kb = load_kb(resolve_settings(g));
  const auto report = ground(model, *kb);
  if (report.empty()) {
    out << path << ": valid, all framework ids grounded\n";
    return kOk;
  }
  out << "grounding report:\n";
  auto list = [&](const char* what, const std::vector<GroundingEntry>& entries) {
    for (const auto& e : entries) out << "  " << what << " " << e.id << " at " << e.path << "\n";
  };
  list("unknown technique", report.unknown_technique_ids);
  list("deprecated technique", report.deprecated_technique_ids);
  list("unknown CVE", report.unknown_cve_ids);
  list("unknown control", report.unknown_control_ids);
  return kDomainFailure;
}

struct BenchFlags {
  std::string prompts;
  int repeat = 5;
  std::string report;
};

struct ClassStats {
  std::string file;
  std::vector<std::int64_t> latencies;
  std::size_t trials = 0;
  std::size_t delivered = 0;
};

int cmd_bench(const GlobalFlags& g, const BenchFlags& f, std::ostream& out, std::ostream& err) {
  if (f.repeat < 1) throw UsageError("--repeat must be at least 1");
  if (!fs::is_directory(f.prompts)) throw UsageError("--prompts must be a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(f.prompts))
    if (e.is_regular_file()) files.push_back(e.path());
  if (files.empty()) throw UsageError("no prompt files in " + f.prompts);
  std::sort(files.begin(), files.end());

  auto settings = resolve_settings(g);
  auto config = agent_config(settings);
  config.max_clarify_rounds = 0;
  auto clock = make_system_clock();
  auto providers = provider_factory(settings, clock);
  auto res = load_resources(settings);
  Agent agent({res.kb, res.corpus, res.lexicon, res.templates, clock, std::make_shared<RandomIds>()});
  NoAnswers no_answers;

  std::map<PromptClass, ClassStats> stats;
  std::string provider_name;
  for (const auto& file : files) {
    const auto desc = read_description(file);
    const auto cls = classify_prompt(desc, *res.lexicon);
    auto& st = stats[cls];
    if (!st.file.empty()) st.file += ",";
    st.file += file.filename().string();
    for (int i = 0; i < f.repeat; ++i) {
      auto provider = providers();
      provider_name = provider->name();
      auto session = agent.start_session(desc, config);
      agent.run_to_completion(session, *provider, no_answers);
      ++st.trials;
      if (session.state == AgentState::Delivered) ++st.delivered;
      for (const auto& e : session.events)
        if (e.kind == "exchange") st.latencies.push_back(e.payload.at("latency_ms").get<std::int64_t>());
    }
  }

  const std::string note = "published reference: 20–30 s per request against a hosted remote model (not comparable to local runs)";
  ojson report = {{"provider", provider_name}, {"repeat", f.repeat}, {"classes", ojson::array()}};
  out << std::left << std::setw(10) << "class" << std::setw(8) << "trials" << std::setw(10) << "mean_ms"
      << std::setw(8) << "min_ms" << std::setw(8) << "max_ms" << "provider\n";
  for (const auto& [cls, st] : stats) {
    if (st.latencies.empty()) {
      err << to_token(cls) << ": no provider exchanges recorded\n";
      return kDomainFailure;
    }
    double sum = 0;
    for (auto l : st.latencies) sum += static_cast<double>(l);
    const double mean = sum / static_cast<double>(st.latencies.size());
    const auto [mn, mx] = std::minmax_element(st.latencies.begin(), st.latencies.end());
    std::ostringstream m;
    m << std::fixed << std::setprecision(1) << mean;
    out << std::left << std::setw(10) << to_token(cls) << std::setw(8) << st.trials << std::setw(10) << m.str()
        << std::setw(8) << *mn << std::setw(8) << *mx << provider_name << "\n";
    report["classes"].push_back({{"class", to_token(cls)},
                                 {"files", st.file},
                                 {"trials", st.trials},
                                 {"delivered", st.delivered},
                                 {"exchanges", st.latencies.size()},
                                 {"mean_latency_ms", mean},
                                 {"min_latency_ms", *mn},
                                 {"max_latency_ms", *mx}});
  }
  out << note << "\n";
  report["reference_note"] = note;
  if (!f.report.empty()) write_text_file(f.report, report.dump(2) + "\n");
  return kOk;
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct ServeFlags {
  std::string bind;
  std::string snapshot_dir;
};

int cmd_serve(const GlobalFlags& g, const ServeFlags& f, std::ostream& out, std::ostream&) {
  auto settings = resolve_settings(g);
  const auto token = env_value(kServiceTokenEnv);
  if (!token) throw UsageError("serve needs a bearer token in " + std::string(kServiceTokenEnv));

  ServiceConfig sc;
  const auto bind = f.bind.empty() ? settings.get_or("service.bind", "127.0.0.1:8080") : f.bind;
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw UsageError("--bind must be host:port");
  sc.host = bind.substr(0, colon);
  try {
    sc.port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw UsageError("--bind must be host:port");
  }
  sc.token = *token;
  sc.long_poll = std::chrono::seconds(settings.get_int("service.long_poll_s", 25));
  const auto snap = f.snapshot_dir.empty() ? settings.get_or("service.snapshot_dir", "") : f.snapshot_dir;
  if (!snap.empty()) sc.snapshot_dir = snap;
  sc.agent = agent_config(settings);

  auto clock = make_system_clock();
  auto providers = provider_factory(settings, clock);
  auto res = load_resources(settings);
  auto agent = std::make_shared<const Agent>(
      AgentDeps{res.kb, res.corpus, res.lexicon, res.templates, clock, std::make_shared<RandomIds>()});

  SessionService service(agent, providers, sc);
  const int port = service.start();
  out << "listening on " << sc.host << ":" << port << "\n" << std::flush;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  service.stop();
  out << "stopped\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Agentic threat model generator"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "Settings file (key = value)");
  app.add_option("--kb-dir", g.kb_dir, "Knowledge base snapshot directory");
  app.add_option("--corpus-dir", g.corpus_dir, "Few-shot example directory");
  app.add_option("--data-dir", g.data_dir, "Directory with lexicon, templates, corpus and KB sources");
  app.add_option("--provider", g.provider, "remote or scripted")->check(CLI::IsMember({"remote", "scripted"}));
  app.add_option("--script", g.script, "Response script for the scripted provider");
  app.add_option("--trace", g.trace, "Write the session event log (JSON lines)");

  GenerateFlags gen;
  auto* generate = app.add_subcommand("generate", "Generate a threat model");
  generate->add_option("--input", gen.input, "Description file (.json or text)");
  generate->add_option("--out", gen.out, "Write the delivered model here instead of stdout");
  generate->add_option("--answers", gen.answers, "Scripted clarification answers");
  generate->add_flag("--interactive", gen.interactive, "Ask clarification questions on the terminal");
  generate->add_flag("--fixed-clock", gen.fixed_clock, "Virtual clock and sequential ids for reproducible traces");

  std::string source, source_file;
  auto* kb = app.add_subcommand("kb", "Knowledge base management");
  kb->require_subcommand(1);
  auto* ingest = kb->add_subcommand("ingest", "Ingest a source into the snapshot");
  ingest->add_option("--source", source, "attack, nvd, nist or advisories")->required();
  ingest->add_option("--file", source_file, "Source file")->required();

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a model file against the schema and KB");
  validate->add_option("path", validate_path, "Model file")->required();

  BenchFlags bf;
  auto* bench = app.add_subcommand("bench", "Latency benchmark over prompt classes");
  bench->add_option("--prompts", bf.prompts, "Directory with one description per class")->required();
  bench->add_option("--repeat", bf.repeat, "Sessions per class");
  bench->add_option("--report", bf.report, "Write the report as JSON");

  ServeFlags sf;
  auto* serve = app.add_subcommand("serve", "Run the session HTTP API");
  serve->add_option("--bind", sf.bind, "host:port");
  serve->add_option("--snapshot-dir", sf.snapshot_dir, "Persist sessions here on shutdown");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*generate) return cmd_generate(g, gen, in, out, err);
    if (*ingest) return cmd_kb_ingest(g, source, source_file, out, err);
    if (*validate) return cmd_validate(g, validate_path, out, err);
    if (*bench) return cmd_bench(g, bf, out, err);
    if (*serve) return cmd_serve(g, sf, out, err);
  } catch (const UsageError& e) {
    err << e.what() << "\n";
    return kUsage;
  } catch (const ConfigInvalid& e) {
    err << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const CorpusInvalid& e) {
    err << e.what() << "\n";
    return kUsage;
  } catch (const MalformedSource& e) {
    err << "MalformedSource: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace tmagent::cli
