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

#ifndef MODTRIAGE_AUDIT_HPP_
#define MODTRIAGE_AUDIT_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modtriage/classify.hpp"
#include "modtriage/encode.hpp"
#include "modtriage/rules.hpp"

namespace modtriage {

// Single what-if edit `from_token -> to_token`.
struct Counterfactual {
  std::string from_token;
  std::string to_token;

  friend bool operator==(const Counterfactual&, const Counterfactual&) = default;
};

struct AuditRecord {
  std::uint64_t frame_id = 0;
  Label label_explained = Label::kNormal;
  std::vector<std::string> evidence;  // verbatim substrings of x, input order
  std::set<RiskTag> risk_tags;
  std::optional<Counterfactual> counterfactual;
  // False when the auditor never produced a parseable record.
  bool json_well_formed = true;
  std::string error;
  int attempts = 1;
  std::optional<double> latency_ms;
  std::optional<TokenUsage> token_usage;
};

struct RecordValidity {
  bool json_well_formed = true;
  bool spans_valid = true;
  bool risk_citation_consistent = true;
  bool contradiction_free = true;
  bool unexplained_critical = false;

  friend bool operator==(const RecordValidity&, const RecordValidity&) = default;
};

// Second pass: explains a fixed label, never changes it.
class Auditor {
 public:
  virtual ~Auditor() = default;
  virtual AuditRecord audit(const TokenString& x, Label y_hat) const = 0;
  virtual std::string_view backend_name() const = 0;
};

// Critical: evidence is the trigger set in input order and the counterfactual
// is the first single edit that clears every rule (absent if none does).
// Normal: evidence is the FC and EX tokens, counterfactual EX -> EX:1.
AuditRecord rule_audit(const TokenString& x, Label y_hat, const RuleSet& rules);

class RuleAuditor final : public Auditor {
 public:
  explicit RuleAuditor(RuleSet rules = RuleSet::defaults())
      : rules_(std::move(rules)) {}
  AuditRecord audit(const TokenString& x, Label y_hat) const override {
    return rule_audit(x, y_hat, rules_);
  }
  std::string_view backend_name() const override { return "rule"; }

 private:
  RuleSet rules_;
};

// User turn sent to the auditor for token string x and fixed label y_hat.
std::string auditor_user_message(std::string_view x, Label y_hat);

// Strict auditor reply check: exactly evidence, risk_tags and counterfactual;
// a reply carrying its own label is rejected.
std::optional<AuditRecord> parse_auditor_reply(std::string_view content,
                                               std::string* reason = nullptr);

// Same retry budget as the classifier. Failures produce a record with
// json_well_formed = false; they never throw past the caller.
AuditRecord llm_audit(const TokenString& x, Label y_hat,
                      const PromptConfig& cfg, ChatTransport& transport,
                      int max_attempts = kDefaultMaxAttempts);

class LlmAuditor final : public Auditor {
 public:
  // Throws ConfigError when the auditor prompt equals the classifier prompt.
  LlmAuditor(PromptConfig cfg, std::shared_ptr<ChatTransport> transport,
             const std::string& classifier_prompt_fingerprint,
             int max_attempts = kDefaultMaxAttempts);
  AuditRecord audit(const TokenString& x, Label y_hat) const override;
  std::string_view backend_name() const override { return "llm"; }

 private:
  PromptConfig cfg_;
  std::shared_ptr<ChatTransport> transport_;
  int max_attempts_;
};

// Indices of the tokens of x overlapped by the first occurrence of each
// evidence item. Items that do not occur are ignored.
std::set<std::size_t> covering_tokens(const TokenString& x,
                                      std::span<const std::string> evidence);

RecordValidity validate_record(const TokenString& x, const AuditRecord& rec,
                               const RuleSet& risk_tokens);

struct FlagRate {
  std::size_t count = 0;
  std::size_t total = 0;
  std::optional<double> rate;  // absent when total == 0
};

struct ValiditySummary {
  FlagRate json_well_formed;
  FlagRate spans_valid;
  FlagRate risk_citation_consistent;
  FlagRate contradiction_free;
  FlagRate unexplained_critical;  // over critical records only
};

struct LabeledValidity {
  Label label_explained = Label::kNormal;
  RecordValidity validity;
};

ValiditySummary validity_rates(std::span<const LabeledValidity> records);

std::string audit_record_to_json(const AuditRecord& rec,
                                 const RecordValidity& validity);

struct StoredAudit {
  AuditRecord record;
  RecordValidity validity;
};
StoredAudit audit_record_from_json(std::string_view line);

}  // namespace modtriage

#endif  // MODTRIAGE_AUDIT_HPP_
