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

#include "modtriage/rules.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "modtriage/util.hpp"

namespace modtriage {

namespace {

constexpr std::array<std::string_view, 6> kTagNames{
    "function_code", "timing", "exception",
    "direction",     "length", "protocol_compliance"};

constexpr std::array<int, 19> kPublicFunctionCodes{
    1, 2, 3, 4, 5, 6, 7, 8, 11, 12, 15, 16, 17, 20, 21, 22, 23, 24, 43};

}  // namespace

std::string_view to_string(RiskTag t) {
  return kTagNames[static_cast<std::size_t>(t)];
}

std::optional<RiskTag> parse_risk_tag(std::string_view s) {
  auto it = std::find(kTagNames.begin(), kTagNames.end(), s);
  if (it == kTagNames.end()) return std::nullopt;
  return static_cast<RiskTag>(it - kTagNames.begin());
}

bool RuleSet::is_defined_public_fc(int fc) {
  return std::find(kPublicFunctionCodes.begin(), kPublicFunctionCodes.end(),
                   fc) != kPublicFunctionCodes.end();
}

RuleSet RuleSet::defaults() {
  RuleSet r;
  for (int fc = 0; fc < 256; ++fc) {
    bool write = fc == 5 || fc == 6 || fc == 15 || fc == 16;
    if (fc >= 128 || write || !is_defined_public_fc(fc)) r.high_risk_fc.set(fc);
  }
  return r;
}

std::optional<Rule> RuleSet::rule_for(const Token& tok) const {
  if (!tok.value) return std::nullopt;
  int v = *tok.value;
  switch (tok.field) {
    case Field::kEx:
      if (exception_rule && v > 0) return Rule::kException;
      break;
    case Field::kFc:
      if (v >= 0 && v < 256 && high_risk_fc.test(static_cast<std::size_t>(v)))
        return Rule::kFunctionCode;
      break;
    case Field::kIat:
      if (burst_iat_buckets.count(v)) return Rule::kBurstTiming;
      break;
    default:
      break;
  }
  return std::nullopt;
}

std::optional<RiskTag> RuleSet::category(const Token& tok) const {
  auto rule = rule_for(tok);
  if (!rule) return std::nullopt;
  switch (*rule) {
    case Rule::kException: return RiskTag::kException;
    case Rule::kFunctionCode: return RiskTag::kFunctionCode;
    case Rule::kBurstTiming: return RiskTag::kTiming;
  }
  return std::nullopt;
}

std::vector<RiskTag> RuleSet::tags_for(const Token& tok) const {
  std::vector<RiskTag> out;
  auto cat = category(tok);
  if (!cat) return out;
  out.push_back(*cat);
  if (*cat == RiskTag::kFunctionCode && *tok.value < 128 &&
      !is_defined_public_fc(*tok.value)) {
    out.push_back(RiskTag::kProtocolCompliance);
  }
  return out;
}

std::vector<Trigger> RuleSet::triggers(std::span<const Token> tokens) const {
  std::vector<Trigger> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (auto rule = rule_for(tokens[i])) {
      out.push_back({*rule, i, tokens[i].text});
    }
  }
  return out;
}

double RuleSet::confidence_for(std::size_t fired) const {
  double c = std::min(max_confidence,
                      base_confidence + per_rule_confidence *
                                            static_cast<double>(fired));
  return std::round(c * 1e6) / 1e6;
}

std::string RuleSet::fingerprint() const {
  std::string s = "rules/v" + std::to_string(version) + "/fc=" +
                  high_risk_fc.to_string() + "/ex=" +
                  (exception_rule ? "1" : "0") + "/iat=";
  for (int b : burst_iat_buckets) s += std::to_string(b) + ";";
  s += "/conf=" + format_double(base_confidence) + "," +
       format_double(per_rule_confidence) + "," +
       format_double(max_confidence);
  return sha256_hex(s);
}

}  // namespace modtriage
