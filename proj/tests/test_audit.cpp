// Copyright 2026 The modtriage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <random>

#include "doctest.h"
#include "modtriage/audit.hpp"
#include "support.hpp"

using namespace modtriage;
using modtriage::testing::ScriptedTransport;

namespace {

TokenString tok(const std::string& s) {
  auto t = parse_token_string(s);
  REQUIRE(t);
  return *t;
}

PromptConfig auditor_prompt() {
  PromptConfig cfg;
  cfg.system_text = "Explain the fixed label.";
  cfg.schema_legend_text = "legend";
  return cfg;
}

bool has_tag(const AuditRecord& r, RiskTag t) { return r.risk_tags.count(t) > 0; }

}  // namespace

TEST_SUITE("audit") {

TEST_CASE("rule audit with two triggers has no clearing edit") {
  auto x = tok("DIR:S2C FC:129 UNIT:U1 LEN:B1 IAT:B2 EX:1");
  auto r = rule_audit(x, Label::kCritical, RuleSet::defaults());
  CHECK(r.evidence == std::vector<std::string>{"FC:129", "EX:1"});
  CHECK(has_tag(r, RiskTag::kFunctionCode));
  CHECK(has_tag(r, RiskTag::kException));
  CHECK_FALSE(r.counterfactual.has_value());
  CHECK(r.label_explained == Label::kCritical);
}

TEST_CASE("rule audit with one trigger proposes a clearing edit") {
  auto x = tok("DIR:C2S FC:06 UNIT:U1 LEN:B1 IAT:B3 EX:0");
  auto r = rule_audit(x, Label::kCritical, RuleSet::defaults());
  CHECK(r.evidence == std::vector<std::string>{"FC:06"});
  REQUIRE(r.counterfactual);
  CHECK(r.counterfactual->from_token == "FC:06");
  CHECK(r.counterfactual->to_token == "FC:03");
}

TEST_CASE("rule audit of a normal frame") {
  auto x = tok("DIR:C2S FC:03 UNIT:U1 LEN:B2 IAT:B4 EX:0");
  auto r = rule_audit(x, Label::kNormal, RuleSet::defaults());
  CHECK(r.evidence == std::vector<std::string>{"FC:03", "EX:0"});
  REQUIRE(r.counterfactual);
  CHECK(*r.counterfactual == Counterfactual{"EX:0", "EX:1"});
  auto v = validate_record(x, r, RuleSet::defaults());
  CHECK(v == RecordValidity{});
}

TEST_CASE("rule audit evidence equals the trigger set") {
  auto rules = RuleSet::defaults();
  std::mt19937_64 rng(41);
  for (int i = 0; i < 1000; ++i) {
    int fc = static_cast<int>(rng() % 256);
    std::string x_text = "DIR:" + std::string(rng() % 2 ? "C2S" : "S2C") +
                         " FC:" + render_token(Field::kFc, fc).substr(3) +
                         " UNIT:U1 LEN:B" + std::to_string(1 + rng() % 4) +
                         " IAT:B" + std::to_string(rng() % 5) +
                         " EX:" + std::to_string(rng() % 3);
    auto x = tok(x_text);
    auto toks = *parse_fragment(x.text);
    std::vector<std::string> expected;
    for (const auto& t : toks) {
      if (rules.is_high_risk(t)) expected.push_back(t.text);
    }
    if (expected.empty()) continue;
    auto r = rule_audit(x, Label::kCritical, rules);
    CHECK(r.evidence == expected);
    auto v = validate_record(x, r, rules);
    CHECK(v.spans_valid);
    CHECK(v.risk_citation_consistent);
    CHECK(v.contradiction_free);
    CHECK_FALSE(v.unexplained_critical);
    if (r.counterfactual) {
      auto edited = x.text;
      edited.replace(edited.find(r.counterfactual->from_token),
                     r.counterfactual->from_token.size(), r.counterfactual->to_token);
      CHECK(rule_classify(edited, rules).label == Label::kNormal);
    }
  }
}

TEST_CASE("validity flags") {
  auto rules = RuleSet::defaults();
  auto x = tok("DIR:S2C FC:129 UNIT:U1 LEN:B1 IAT:B2 EX:1");

  AuditRecord fabricated = rule_audit(x, Label::kCritical, rules);
  fabricated.evidence.push_back("FC:999");
  CHECK_FALSE(validate_record(x, fabricated, rules).spans_valid);

  AuditRecord empty;
  empty.label_explained = Label::kCritical;
  auto v = validate_record(x, empty, rules);
  CHECK(v.unexplained_critical);
  CHECK_FALSE(v.risk_citation_consistent);

  AuditRecord untagged = rule_audit(x, Label::kCritical, rules);
  untagged.risk_tags.clear();
  CHECK_FALSE(validate_record(x, untagged, rules).risk_citation_consistent);

  AuditRecord contra;
  contra.label_explained = Label::kNormal;
  contra.evidence = {"FC:129", "EX:1"};
  CHECK_FALSE(validate_record(x, contra, rules).contradiction_free);

  AuditRecord broken;
  broken.json_well_formed = false;
  CHECK_FALSE(validate_record(x, broken, rules).json_well_formed);
}

TEST_CASE("covering tokens") {
  auto x = tok("DIR:C2S FC:03 UNIT:U1 LEN:B2 IAT:B4 EX:0");
  std::vector<std::string> ev{"FC:", "B4 EX", "nothing"};
  CHECK(covering_tokens(x, ev) == std::set<std::size_t>{1, 4, 5});
}

TEST_CASE("validity rates") {
  std::vector<LabeledValidity> recs(4);
  recs[0].validity.spans_valid = false;
  recs[1].label_explained = Label::kCritical;
  recs[1].validity.unexplained_critical = true;
  recs[2].label_explained = Label::kCritical;
  auto s = validity_rates(recs);
  CHECK(*s.spans_valid.rate == 0.75);
  CHECK(s.spans_valid.count == 3);
  CHECK(*s.json_well_formed.rate == 1.0);
  CHECK(s.unexplained_critical.total == 2);
  CHECK(s.unexplained_critical.count == 1);
  CHECK(*s.unexplained_critical.rate == 0.5);

  auto none = validity_rates({});
  CHECK_FALSE(none.spans_valid.rate.has_value());
  CHECK_FALSE(none.unexplained_critical.rate.has_value());
}

TEST_CASE("llm auditor parses, retries and never throws") {
  auto x = tok("DIR:S2C FC:129 UNIT:U1 LEN:B1 IAT:B2 EX:1");
  ScriptedTransport t({
      R"({"label":"normal","evidence":[],"risk_tags":[],"counterfactual":null})",
      R"({"evidence":["FC:129","EX:1"],"risk_tags":["function_code","exception"],)"
      R"("counterfactual":{"from":"EX:1","to":"EX:0"}})"});
  auto r = llm_audit(x, Label::kCritical, auditor_prompt(), t);
  CHECK(r.json_well_formed);
  CHECK(r.attempts == 2);
  CHECK(r.label_explained == Label::kCritical);
  CHECK(r.evidence == std::vector<std::string>{"FC:129", "EX:1"});
  REQUIRE(r.counterfactual);
  CHECK(r.counterfactual->to_token == "EX:0");
  CHECK(t.requests[0].messages.back().content ==
        auditor_user_message(x.text, Label::kCritical));

  ScriptedTransport fab({R"({"evidence":["FC:999"],"risk_tags":[],"counterfactual":null})"});
  auto f = llm_audit(x, Label::kCritical, auditor_prompt(), fab);
  CHECK_FALSE(validate_record(x, f, RuleSet::defaults()).spans_valid);

  ScriptedTransport bad({"x", "y", "z"});
  auto b = llm_audit(x, Label::kCritical, auditor_prompt(), bad);
  CHECK_FALSE(b.json_well_formed);
  CHECK(b.label_explained == Label::kCritical);
  CHECK_FALSE(b.error.empty());

  ScriptedTransport down({std::nullopt, std::nullopt, std::nullopt});
  CHECK_FALSE(llm_audit(x, Label::kNormal, auditor_prompt(), down).json_well_formed);
}

TEST_CASE("auditor prompt must differ from the classifier prompt") {
  auto cfg = auditor_prompt();
  auto transport = std::make_shared<ScriptedTransport>(std::vector<std::optional<std::string>>{});
  CHECK_THROWS_AS(LlmAuditor(cfg, transport, cfg.fingerprint()), ConfigError);
  CHECK_NOTHROW(LlmAuditor(cfg, transport, "other"));
}

TEST_CASE("audit record persistence") {
  auto x = tok("DIR:C2S FC:06 UNIT:U1 LEN:B1 IAT:B3 EX:0");
  auto r = rule_audit(x, Label::kCritical, RuleSet::defaults());
  r.frame_id = 9;
  auto v = validate_record(x, r, RuleSet::defaults());
  auto back = audit_record_from_json(audit_record_to_json(r, v));
  CHECK(back.record.frame_id == 9);
  CHECK(back.record.evidence == r.evidence);
  CHECK(back.record.risk_tags == r.risk_tags);
  CHECK(back.record.counterfactual == r.counterfactual);
  CHECK(back.validity == v);
}

}  // TEST_SUITE
