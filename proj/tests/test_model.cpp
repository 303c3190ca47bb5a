#include <doctest.h>

#include "support.hpp"

using namespace tmtest;

TEST_CASE("canonical round trip over generated models") {
  ModelGen gen(20240601);
  int failures = 0;
  for (int i = 0; i < 200; ++i) {
    const auto m = gen.next();
    REQUIRE_MESSAGE(validate_model(m).empty(), describe(validate_model(m)));
    const auto text = render_canonical(m);
    if (parse_canonical(text) != m) ++failures;
    CHECK(render_canonical(parse_canonical(text)) == text);
  }
  CHECK(failures == 0);
}

TEST_CASE("canonical form has exactly the ten top-level keys in order") {
  const auto m = load_model(fixture("review/base.model.json"));
  const auto doc = nlohmann::ordered_json::parse(render_canonical(m));
  std::vector<std::string> keys;
  for (const auto& [k, v] : doc.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"model_id", "system", "assets", "entry_points", "attacker_profiles",
                                         "threats", "vulnerabilities", "mitigations", "revision", "produced_at"});
  CHECK(doc["produced_at"] == "2025-01-01T00:00:00Z");
}

TEST_CASE("parse errors carry an offset and what was expected") {
  try {
    parse_canonical("{\"model_id\": \"x\",");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.failure().offset <= 18);
    CHECK_FALSE(e.failure().expected.empty());
  }
  CHECK_THROWS_AS(parse_canonical("[1, 2]"), ParseError);
  CHECK_THROWS_AS(parse_canonical("{\"model_id\": \"x\"}"), ParseError);
}

TEST_CASE("field-level problems are reported with paths") {
  auto doc = nlohmann::json::parse(read_text_file(fixture("review/base.model.json")));
  doc["threats"][0]["target_asset_ids"] = {"A404"};
  doc["assets"][0]["sensitivity"] = "extreme";
  try {
    parse_canonical(doc.dump());
    FAIL("expected InvalidModel");
  } catch (const InvalidModel& e) {
    const auto text = describe(e.violations());
    CHECK(text.find("assets[0].sensitivity") != std::string::npos);
  }

  auto m = load_model(fixture("review/base.model.json"));
  m.threats[0].target_asset_ids = {"A404"};
  const auto v = validate_model(m);
  REQUIRE(v.size() == 1);
  CHECK(v[0].path == "threats[0].target_asset_ids");
  CHECK_THROWS_AS(render_canonical(m), InvalidModel);
}

TEST_CASE("duplicate ids and blank names are rejected") {
  auto m = load_model(fixture("review/base.model.json"));
  m.assets.push_back(m.assets[0]);
  m.assets.back().name = "  ";
  const auto text = describe(validate_model(m));
  CHECK(text.find("assets") != std::string::npos);
  CHECK(validate_model(m).size() >= 2);
}

TEST_CASE("later revisions need every analysis section except vulnerabilities") {
  auto m = load_model(fixture("review/base.model.json"));
  m.revision = 1;
  CHECK(validate_model(m).empty());
  m.mitigations.clear();
  const auto v = validate_model(m);
  REQUIRE(v.size() == 1);
  CHECK(v[0].path == "mitigations");
  m.revision = 0;
  CHECK(validate_model(m).empty());
}

TEST_CASE("unknown keys are rejected in models but ignored in descriptions") {
  auto doc = nlohmann::json::parse(read_text_file(fixture("review/base.model.json")));
  doc["assets"][0]["colour"] = "red";
  CHECK_THROWS_AS(parse_canonical(doc.dump()), InvalidModel);

  const auto d = description_from_json({{"title", "T"}, {"narrative", "N"}, {"extra", 1}});
  CHECK(d.title == "T");
  CHECK_THROWS_AS(description_from_json({{"title", 5}, {"narrative", "N"}}), InvalidModel);
}

TEST_CASE("descriptions need a title and narrative and unique component names") {
  SystemDescription d{"Shop", "  ", {{"API", ComponentKind::Server, {}}, {"api", ComponentKind::Server, {}}}, {"Bad Tag"}};
  const auto v = validate_description(d);
  CHECK(v.size() == 3);
}

TEST_CASE("timestamps round trip through RFC 3339") {
  const auto t = parse_rfc3339("2022-05-30T12:34:56+02:00");
  REQUIRE(t);
  CHECK(format_rfc3339(*t) == "2022-05-30T10:34:56Z");
  CHECK(parse_rfc3339("2022-05-30T12:34:56.789Z").has_value());
  CHECK_FALSE(parse_rfc3339("yesterday").has_value());
}
