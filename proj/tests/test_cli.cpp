#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

using namespace tmtest;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args, const std::string& input = {}) {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = tmagent::cli::run(args, in, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("tmagent-cli-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::string> scripted(const std::string& script) {
  return {"--provider", "scripted", "--script", fixture("scripts/" + script + ".json").string()};
}

std::vector<std::string> operator+(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("generate exit codes follow the session outcome") {
  TempDir tmp("gen");
  const auto input = fixture("drone.txt").string();

  auto ok = run_cli(scripted("happy_path") + std::vector<std::string>{"generate", "--input", input, "--fixed-clock"});
  CHECK(ok.code == 0);
  CHECK_NOTHROW(parse_canonical(ok.out));

  const auto out_file = (tmp.path / "m.json").string();
  auto repaired = run_cli(scripted("one_repair") +
                      std::vector<std::string>{"generate", "--input", input, "--out", out_file, "--fixed-clock"});
  CHECK(repaired.code == 0);
  CHECK(repaired.out.empty());
  CHECK(fs::exists(out_file));
  CHECK(repaired.err.find("1 repairs") != std::string::npos);

  auto garbage = run_cli(scripted("garbage") + std::vector<std::string>{"generate", "--input", input});
  CHECK(garbage.code == 2);
  CHECK(garbage.err.find("repair limit") != std::string::npos);

  auto answered = run_cli(scripted("one_clarify_round") +
                      std::vector<std::string>{"generate", "--input", input, "--answers",
                                               fixture("answers/one_clarify_round.json").string()});
  CHECK(answered.code == 0);
  CHECK(parse_canonical(answered.out).revision == 1);

  auto headless = run_cli(scripted("one_clarify_round") + std::vector<std::string>{"generate", "--input", input});
  CHECK(headless.code == 0);
  CHECK(parse_canonical(headless.out).revision == 0);
  CHECK(headless.err.find("unresolved") != std::string::npos);
}

TEST_CASE("interactive generation reads answers from the input stream") {
  auto r = run_cli(scripted("one_clarify_round") + std::vector<std::string>{"generate", "--interactive", "--input",
                                                                         fixture("drone.txt").string()},
               "Tracking updates are signed.\n");
  CHECK(r.code == 0);
  CHECK(r.out.find("Q1 [R") != std::string::npos);
  const auto model_start = r.out.find("{\n");
  REQUIRE(model_start != std::string::npos);
  CHECK(parse_canonical(r.out.substr(model_start)).revision == 1);
}

TEST_CASE("traces from fixed-clock runs are identical") {
  TempDir tmp("trace");
  const auto run = [&](const std::string& name) {
    const auto trace = (tmp.path / name).string();
    auto r = run_cli(scripted("one_repair") + std::vector<std::string>{"--trace", trace, "generate", "--input",
                                                                    fixture("drone.txt").string(), "--fixed-clock"});
    CHECK(r.code == 0);
    return read_text_file(trace);
  };
  const auto a = run("a.jsonl");
  CHECK(a == run("b.jsonl"));
  CHECK(replay(parse_event_log(a)).state == AgentState::Delivered);
}

TEST_CASE("usage and configuration problems exit 1") {
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"frobnicate"}).code == 1);
  CHECK(run_cli({"generate", "--input"}).code == 1);
  CHECK(run_cli({"--provider", "psychic", "generate"}).code == 1);
  CHECK(run_cli(std::vector<std::string>{"--provider", "scripted", "generate", "--input", fixture("drone.txt").string()})
            .code == 1);
  CHECK(run_cli(scripted("happy_path") + std::vector<std::string>{"generate", "--input", "/nonexistent/x.txt"}).code == 1);

  ::unsetenv("THREATGPT_API_KEY");
  auto remote = run_cli({"generate", "--input", fixture("drone.txt").string()});
  CHECK(remote.code == 1);
  CHECK(remote.err.find("THREATGPT_API_KEY") != std::string::npos);

  TempDir tmp("cfg");
  const auto cfg = (tmp.path / "bad.conf").string();
  write_text_file(cfg, "agent.max_repairs = lots\n");
  CHECK(run_cli(scripted("happy_path") +
            std::vector<std::string>{"--config", cfg, "generate", "--input", fixture("drone.txt").string()})
            .code == 1);
}

TEST_CASE("config files set defaults and flags override them") {
  TempDir tmp("cfg2");
  const auto cfg = (tmp.path / "agent.conf").string();
  write_text_file(cfg, "provider.kind = scripted\nprovider.script_path = " +
                           fixture("scripts/garbage.json").string() + "\nagent.max_repairs = 0\n");
  const auto input = fixture("drone.txt").string();
  auto zero = run_cli({"--config", cfg, "generate", "--input", input});
  CHECK(zero.code == 2);
  CHECK(zero.err.find("repair limit") != std::string::npos);
  auto overridden = run_cli({"--config", cfg, "--script", fixture("scripts/happy_path.json").string(), "generate",
                         "--input", input});
  CHECK(overridden.code == 0);
}

TEST_CASE("kb ingest reports counts and is idempotent") {
  TempDir tmp("kb");
  const auto kb = tmp.path.string();
  const auto src = data_dir() / "kb";
  const std::vector<std::pair<std::string, std::string>> expected = {
      {"attack", "techniques loaded: 11"}, {"nvd", "CVEs loaded: 20"}, {"nist", "controls loaded: 15"},
      {"advisories", "advisories loaded: 3"}};
  const std::map<std::string, std::string> files = {
      {"attack", "attack.json"}, {"nvd", "nvd.json"}, {"nist", "nist.csv"}, {"advisories", "advisories.csv"}};
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& [source, line] : expected) {
      auto r = run_cli({"--kb-dir", kb, "kb", "ingest", "--source", source, "--file", (src / files.at(source)).string()});
      CHECK(r.code == 0);
      CHECK(r.out.find(line) != std::string::npos);
    }
  }
  auto wrong = run_cli({"--kb-dir", kb, "kb", "ingest", "--source", "nvd", "--file", (src / "nist.csv").string()});
  CHECK(wrong.code == 1);
  CHECK(wrong.err.find("MalformedSource") != std::string::npos);

  // The ingested snapshot drives generation.
  auto gen = run_cli(scripted("happy_path") +
                 std::vector<std::string>{"--kb-dir", kb, "generate", "--input", fixture("drone.txt").string()});
  CHECK(gen.code == 0);
}

TEST_CASE("validate distinguishes unreadable, invalid and ungrounded models") {
  TempDir tmp("val");
  CHECK(run_cli({"validate", fixture("review/base.model.json").string()}).code == 0);
  CHECK(run_cli({"validate", (tmp.path / "missing.json").string()}).code == 1);
  const auto junk = (tmp.path / "junk.json").string();
  write_text_file(junk, "{ nope");
  CHECK(run_cli({"validate", junk}).code == 1);

  auto invalid = nlohmann::ordered_json::parse(read_text_file(fixture("review/base.model.json")));
  invalid["threats"][0]["target_asset_ids"] = {"A42"};
  const auto bad = (tmp.path / "bad.json").string();
  write_text_file(bad, invalid.dump(2));
  auto r = run_cli({"validate", bad});
  CHECK(r.code == 2);
  CHECK(r.out.find("schema violations") != std::string::npos);

  auto ungrounded = run_cli({"validate", fixture("review/r5.model.json").string()});
  CHECK(ungrounded.code == 2);
  CHECK(ungrounded.out.find("T9999") != std::string::npos);
}

TEST_CASE("bench reports per-class latency") {
  TempDir tmp("bench");
  const auto report = (tmp.path / "r.json").string();
  auto r = run_cli(scripted("bench_100ms") + std::vector<std::string>{"bench", "--prompts", fixture("bench").string(),
                                                                    "--repeat", "2", "--report", report});
  CHECK(r.code == 0);
  CHECK(r.out.find("20–30 s") != std::string::npos);
  const auto doc = nlohmann::json::parse(read_text_file(report));
  REQUIRE(doc["classes"].size() == 3);
  for (const auto& c : doc["classes"]) {
    CHECK(c["trials"] == 2);
    CHECK(c["delivered"] == 2);
    CHECK(c["mean_latency_ms"].get<double>() >= 100.0);
  }
  CHECK(run_cli(scripted("bench_100ms") + std::vector<std::string>{"bench", "--prompts", fixture("bench").string(),
                                                                "--repeat", "0"})
            .code == 1);
}

TEST_CASE("serve refuses to start without a token") {
  ::unsetenv("THREATGPT_SERVICE_TOKEN");
  auto r = run_cli(scripted("happy_path") + std::vector<std::string>{"serve", "--bind", "127.0.0.1:0"});
  CHECK(r.code == 1);
  CHECK(r.err.find("THREATGPT_SERVICE_TOKEN") != std::string::npos);
}
