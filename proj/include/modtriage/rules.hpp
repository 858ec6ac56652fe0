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

#ifndef MODTRIAGE_RULES_HPP_
#define MODTRIAGE_RULES_HPP_

#include <bitset>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modtriage/encode.hpp"

namespace modtriage {

enum class RiskTag {
  kFunctionCode,
  kTiming,
  kException,
  kDirection,
  kLength,
  kProtocolCompliance,
};

std::string_view to_string(RiskTag t);
std::optional<RiskTag> parse_risk_tag(std::string_view s);

enum class Rule { kException, kFunctionCode, kBurstTiming };

struct Trigger {
  Rule rule;
  std::size_t token_index;  // position within the parsed token list
  std::string token;
};

// High-risk token policy shared by the rule classifier, the rule auditor and
// record validation. Versioned so audit artifacts can name the policy used.
struct RuleSet {
  int version = 1;
  std::bitset<256> high_risk_fc;
  bool exception_rule = true;
  std::set<int> burst_iat_buckets{0};
  double base_confidence = 0.5;
  double per_rule_confidence = 0.1;
  double max_confidence = 0.99;

  // FC >= 128, write codes {5, 6, 15, 16}, and every code with no public
  // Modbus definition.
  static RuleSet defaults();

  static bool is_defined_public_fc(int fc);

  std::optional<Rule> rule_for(const Token& tok) const;
  bool is_high_risk(const Token& tok) const { return rule_for(tok).has_value(); }
  // Primary category of a high-risk token.
  std::optional<RiskTag> category(const Token& tok) const;
  // All tags a rule auditor attaches for the token.
  std::vector<RiskTag> tags_for(const Token& tok) const;

  std::vector<Trigger> triggers(std::span<const Token> tokens) const;

  // base + per_rule * fired, capped; rounded to 1e-6 so the stand-in scores
  // are the nearest doubles to their decimal values.
  double confidence_for(std::size_t fired) const;

  std::string fingerprint() const;
};

}  // namespace modtriage

#endif  // MODTRIAGE_RULES_HPP_
