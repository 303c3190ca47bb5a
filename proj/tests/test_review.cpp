#include <doctest.h>

#include "support.hpp"

using namespace tmtest;

TEST_CASE("the base review fixture is clean") {
  const auto findings = review(load_model(fixture("review/base.model.json")), *fixture_kb());
  CHECK(findings.empty());
  CHECK_FALSE(has_blocking(findings));
}

TEST_CASE("each single-gap fixture triggers exactly its own rule") {
  const std::vector<std::pair<RuleId, std::string>> expected = {
      {RuleId::R1, "Backup tapes"},  {RuleId::R2, "Admin impersonation"}, {RuleId::R3, "Maintenance SSH"},
      {RuleId::R4, "STRIDE coverage"}, {RuleId::R5, "T9999"},            {RuleId::R6, "insider access"},
      {RuleId::R7, "M2"}};
  for (int i = 1; i <= 7; ++i) {
    CAPTURE(i);
    const auto findings =
        review(load_model(fixture("review/r" + std::to_string(i) + ".model.json")), *fixture_kb());
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].rule_id == expected[i - 1].first);
    CHECK(findings[0].subject == expected[i - 1].second);
    const bool blocking = i == 1 || i == 2 || i == 3 || i == 5;
    CHECK(has_blocking(findings) == blocking);
    CHECK(findings[0].severity == (blocking ? FindingSeverity::Blocking : FindingSeverity::Advisory));
  }
}

TEST_CASE("question text comes from the template with the subject substituted") {
  const auto findings = review(load_model(fixture("review/r2.model.json")), *fixture_kb());
  const auto qs = generate_questions(findings, *templates());
  REQUIRE(qs.size() == 1);
  CHECK(qs[0].question_id == "Q1");
  CHECK(qs[0].text == "Which mitigations or controls address the threat 'Admin impersonation'?");
  CHECK(qs[0].rule_id == RuleId::R2);
  CHECK(qs[0].target_path == "threats[4]");

  // advisory findings ask nothing
  CHECK(generate_questions(review(load_model(fixture("review/r6.model.json")), *fixture_kb()), *templates()).empty());
}

TEST_CASE("findings sort blocking first and questions are capped") {
  std::vector<ReviewFinding> findings;
  for (int i = 0; i < 8; ++i)
    findings.push_back({RuleId::R1, FindingSeverity::Blocking, "assets[" + std::to_string(i) + "]",
                        "asset " + std::to_string(i), "d"});
  findings.push_back({RuleId::R7, FindingSeverity::Advisory, "mitigations[0]", "M1", "d"});
  const auto qs = generate_questions(findings, *templates(), 5, 4);
  REQUIRE(qs.size() == 5);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    CHECK(qs[i].question_id == "Q" + std::to_string(4 + i));
    CHECK(qs[i].text.back() == '?');
  }
  CHECK(generate_questions(findings, *templates(), 0).empty());

  auto m = load_model(fixture("review/base.model.json"));
  m.attacker_profiles[0].access = Access::External;
  m.mitigations.clear();
  const auto mixed = review(m, *fixture_kb());
  REQUIRE(mixed.size() > 1);
  CHECK(mixed.front().severity == FindingSeverity::Blocking);
  CHECK(mixed.back().severity == FindingSeverity::Advisory);
}

TEST_CASE("answers pair with issued questions") {
  const auto draft = load_model(fixture("review/base.model.json"));
  const std::vector<ClarificationQuestion> issued = {{"Q1", "a?", RuleId::R1, "x", "assets[0]"},
                                                     {"Q2", "b?", RuleId::R2, "y", "threats[0]"}};
  const auto ctx = integrate_answers(draft, issued, {{"Q2", "  rate limits "}});
  REQUIRE(ctx.qa.size() == 2);
  CHECK(ctx.qa[0].second == kNoAnswer);
  CHECK(ctx.qa[1].second == "rate limits");
  CHECK(integrate_answers(draft, issued, {{"Q1", "   "}}).qa[0].second == kNoAnswer);
  CHECK_THROWS_AS(integrate_answers(draft, issued, {{"Q9", "?"}}), UnknownQuestionId);
}

TEST_CASE("review rejects invalid models") {
  auto m = load_model(fixture("review/base.model.json"));
  m.threats[0].target_asset_ids = {"A99"};
  CHECK_THROWS_AS(review(m, *fixture_kb()), InvalidModel);
}

TEST_CASE("templates must cover the blocking rules") {
  CHECK_THROWS(ReviewTemplates::from_json({{"R1", "a?"}}));
  CHECK_THROWS(ReviewTemplates::from_json({{"R1", "a?"}, {"R2", "b"}, {"R3", "c?"}, {"R5", "d?"}}));
  CHECK_NOTHROW(ReviewTemplates::from_json({{"R1", "a?"}, {"R2", "b?"}, {"R3", "c?"}, {"R5", "d?"}}));
}
