#include <doctest.h>

#include "support.hpp"

using namespace tmtest;

namespace {

std::string block(const std::string& body) { return "```threatmodel-json\n" + body + "\n```\n"; }

const ThreatModel& sample() {
  static const auto m = load_model(fixture("review/base.model.json"));
  return m;
}

}  // namespace

TEST_CASE("a single contract block parses, with prose around it") {
  const auto body = render_canonical(sample());
  for (const std::string& raw : {block(body), "Sure!\n\n" + block(body) + "\nHope this helps.",
                                 "```threatmodel-json  \r\n" + body + "\r\n```\r\n"}) {
    const auto r = extract_model(raw);
    REQUIRE(std::holds_alternative<Parsed>(r));
    CHECK(std::get<Parsed>(r).model == sample());
  }
}

TEST_CASE("the drone reply fixtures parse or fail as labelled") {
  CHECK(std::holds_alternative<Parsed>(extract_model(read_text_file(fixture("responses/drone_complete.txt")))));
  CHECK(std::holds_alternative<Parsed>(extract_model(read_text_file(fixture("responses/drone_draft.txt")))));
  CHECK(std::holds_alternative<Parsed>(extract_model(read_text_file(fixture("responses/drone_refined.txt")))));
  const auto r = extract_model(read_text_file(fixture("responses/drone_unterminated.txt")));
  REQUIRE(std::holds_alternative<Repairable>(r));
  CHECK(std::get<Repairable>(r).failure.detail.find("unterminated") != std::string::npos);
  CHECK(std::get<Repairable>(r).failure.offset.has_value());
}

TEST_CASE("empty, non-textual and oversized replies are unrepairable") {
  CHECK(std::holds_alternative<Unrepairable>(extract_model("")));
  CHECK(std::holds_alternative<Unrepairable>(extract_model(" \n\t\n")));
  CHECK(std::holds_alternative<Unrepairable>(extract_model("abc\xff\xfe")));
  CHECK(std::holds_alternative<Unrepairable>(extract_model(std::string("a\0b", 3))));
  CHECK(std::holds_alternative<Unrepairable>(extract_model("\xc3")));  // truncated sequence
  std::string big(kMaxRawBytes + 1, 'x');
  CHECK(std::holds_alternative<Unrepairable>(extract_model(big)));
  std::string limit(kMaxRawBytes, 'x');
  CHECK(std::holds_alternative<Repairable>(extract_model(limit)));
}

TEST_CASE("format problems are repairable and say what went wrong") {
  auto detail = [](const std::string& raw) {
    const auto r = extract_model(raw);
    REQUIRE(std::holds_alternative<Repairable>(r));
    const auto& d = std::get<Repairable>(r).failure.detail;
    CHECK_FALSE(d.empty());
    return d;
  };
  const auto body = render_canonical(sample());
  CHECK(detail(block(body) + block(body)).find("multiple") != std::string::npos);
  CHECK(detail("no model here").find("no threatmodel-json block") != std::string::npos);
  CHECK(detail(block("{\"model_id\": ")).find("invalid JSON") != std::string::npos);
  CHECK(detail(block("{}")).find("model_id") != std::string::npos);
  auto dangling = model_to_json(sample());
  dangling["threats"][0]["target_asset_ids"] = {"A42"};
  CHECK(detail(block(dangling.dump(2))).find("schema violations") != std::string::npos);

  // A json-tagged block is not the contract block; its body is still found as a bare document.
  const auto r = extract_model("```json\n" + body + "```\n");
  CHECK(std::holds_alternative<Parsed>(r));
}

TEST_CASE("a bare top-level document is accepted without a fence") {
  const auto r = extract_model("Here you go:\n" + render_canonical(sample()));
  REQUIRE(std::holds_alternative<Parsed>(r));
  CHECK(std::get<Parsed>(r).model == sample());
}

TEST_CASE("random models survive arbitrary prose wrapping") {
  ModelGen gen(7);
  std::mt19937 rng(11);
  const std::vector<std::string> prose = {"", "Sure.\n", "Here is the model:\n\n", "Note: ``` is a fence.\n",
                                          "{not json}\n", "日本語の説明\n"};
  for (int i = 0; i < 100; ++i) {
    const auto m = gen.next();
    const auto& before = prose[rng() % prose.size()];
    const auto& after = prose[rng() % prose.size()];
    const auto r = extract_model(before + block(render_canonical(m)) + after);
    REQUIRE(std::holds_alternative<Parsed>(r));
    CHECK(std::get<Parsed>(r).model == m);
  }
}
