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

#include "modtriage/audit.hpp"

#include <algorithm>

#include "json.hpp"
#include "modtriage/util.hpp"

namespace modtriage {

namespace {

std::vector<Token> tokens_of(const TokenString& x) {
  std::vector<Token> out;
  for (const auto& t : x.tokens) {
    auto tok = parse_token(t);
    if (!tok) throw PreconditionError("audit: invalid token '" + t + "'");
    out.push_back(std::move(*tok));
  }
  return out;
}

std::optional<std::string> benign_replacement(const Token& tok) {
  switch (tok.field) {
    case Field::kFc: return render_token(Field::kFc, 3);
    case Field::kEx: return render_token(Field::kEx, 0);
    case Field::kIat: return render_token(Field::kIat, 2);
    default: return std::nullopt;
  }
}

std::string_view strip_code_fence(std::string_view s) {
  s = trim(s);
  if (s.substr(0, 3) != "```") return s;
  auto nl = s.find('\n');
  if (nl == std::string_view::npos) return s;
  s = s.substr(nl + 1);
  auto end = s.rfind("```");
  if (end != std::string_view::npos) s = s.substr(0, end);
  return trim(s);
}

}  // namespace

AuditRecord rule_audit(const TokenString& x, Label y_hat,
                       const RuleSet& rules) {
  auto tokens = tokens_of(x);
  AuditRecord rec;
  rec.label_explained = y_hat;

  if (y_hat == Label::kCritical) {
    auto fired = rules.triggers(tokens);
    for (const auto& t : fired) {
      rec.evidence.push_back(t.token);
      for (auto tag : rules.tags_for(tokens[t.token_index])) {
        rec.risk_tags.insert(tag);
      }
    }
    for (const auto& t : fired) {
      auto repl = benign_replacement(tokens[t.token_index]);
      if (!repl) continue;
      auto edited = tokens;
      edited[t.token_index] = *parse_token(*repl);
      if (rules.triggers(edited).empty()) {
        rec.counterfactual = Counterfactual{t.token, *repl};
        break;
      }
    }
    return rec;
  }

  for (const auto& t : tokens) {
    if (t.field == Field::kFc || t.field == Field::kEx) {
      rec.evidence.push_back(t.text);
    }
  }
  rec.counterfactual =
      Counterfactual{x.tokens[static_cast<std::size_t>(Field::kEx)],
                     render_token(Field::kEx, 1)};
  return rec;
}

std::string auditor_user_message(std::string_view x, Label y_hat) {
  return "INPUT: " + std::string(x) + "\nFIXED LABEL: " +
         std::string(to_string(y_hat));
}

std::optional<AuditRecord> parse_auditor_reply(std::string_view content,
                                               std::string* reason) {
  auto fail = [&](std::string why) -> std::optional<AuditRecord> {
    if (reason) *reason = std::move(why);
    return std::nullopt;
  };
  auto j = nlohmann::json::parse(strip_code_fence(content), nullptr, false);
  if (j.is_discarded()) return fail("not JSON");
  if (!j.is_object()) return fail("top level is not an object");
  if (j.contains("label")) return fail("auditor emitted its own label");
  if (j.size() != 3 || !j.contains("evidence") || !j.contains("risk_tags") ||
      !j.contains("counterfactual")) {
    return fail("expected exactly evidence, risk_tags, counterfactual");
  }
  AuditRecord rec;
  if (!j["evidence"].is_array()) return fail("evidence is not an array");
  for (const auto& e : j["evidence"]) {
    if (!e.is_string()) return fail("evidence item is not a string");
    rec.evidence.push_back(e.get<std::string>());
  }
  if (!j["risk_tags"].is_array()) return fail("risk_tags is not an array");
  for (const auto& t : j["risk_tags"]) {
    if (!t.is_string()) return fail("risk tag is not a string");
    auto tag = parse_risk_tag(t.get<std::string>());
    if (!tag) return fail("unknown risk tag '" + t.get<std::string>() + "'");
    rec.risk_tags.insert(*tag);
  }
  const auto& cf = j["counterfactual"];
  if (!cf.is_null()) {
    if (!cf.is_object() || !cf.contains("from") || !cf.contains("to") ||
        !cf["from"].is_string() || !cf["to"].is_string()) {
      return fail("counterfactual must be {from, to} or null");
    }
    rec.counterfactual =
        Counterfactual{cf["from"].get<std::string>(), cf["to"].get<std::string>()};
  }
  return rec;
}

AuditRecord llm_audit(const TokenString& x, Label y_hat,
                      const PromptConfig& cfg, ChatTransport& transport,
                      int max_attempts) {
  auto request = build_chat_request(cfg, auditor_user_message(x.text, y_hat));
  std::optional<AuditRecord> parsed;
  AuditRecord rec;
  try {
    auto outcome = complete_with_retry(
        transport, request, max_attempts, [&](const ChatResponse& r) {
          parsed = parse_auditor_reply(r.content);
          return parsed.has_value();
        });
    rec = std::move(*parsed);
    rec.attempts = outcome.attempts;
    rec.latency_ms = outcome.elapsed_ms;
    if (outcome.usage_seen) rec.token_usage = outcome.usage_total;
  } catch (const ClassifyError& e) {
    rec = AuditRecord{};
    rec.json_well_formed = false;
    rec.error = e.what();
    rec.attempts = max_attempts;
  }
  rec.label_explained = y_hat;
  return rec;
}

LlmAuditor::LlmAuditor(PromptConfig cfg,
                       std::shared_ptr<ChatTransport> transport,
                       const std::string& classifier_prompt_fingerprint,
                       int max_attempts)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      max_attempts_(max_attempts) {
  cfg_.validate();
  if (cfg_.fingerprint() == classifier_prompt_fingerprint) {
    throw ConfigError(
        "auditor prompt must differ from the classifier prompt");
  }
  if (!transport_) throw ConfigError("LlmAuditor: no transport");
}

AuditRecord LlmAuditor::audit(const TokenString& x, Label y_hat) const {
  return llm_audit(x, y_hat, cfg_, *transport_, max_attempts_);
}

std::set<std::size_t> covering_tokens(const TokenString& x,
                                      std::span<const std::string> evidence) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t pos = 0;
  for (const auto& t : x.tokens) {
    spans.emplace_back(pos, pos + t.size());
    pos += t.size() + 1;
  }
  std::set<std::size_t> out;
  for (const auto& item : evidence) {
    if (item.empty()) continue;
    auto at = x.text.find(item);
    if (at == std::string::npos) continue;
    auto end = at + item.size();
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (spans[i].first < end && at < spans[i].second) out.insert(i);
    }
  }
  return out;
}

RecordValidity validate_record(const TokenString& x, const AuditRecord& rec,
                               const RuleSet& risk_tokens) {
  RecordValidity v;
  const bool critical = rec.label_explained == Label::kCritical;
  if (!rec.json_well_formed) {
    v.json_well_formed = false;
    v.spans_valid = false;
    v.risk_citation_consistent = false;
    v.contradiction_free = true;
    v.unexplained_critical = critical;
    return v;
  }

  v.spans_valid = std::all_of(
      rec.evidence.begin(), rec.evidence.end(), [&](const std::string& e) {
        return !e.empty() && x.text.find(e) != std::string::npos;
      });

  auto tokens = tokens_of(x);
  auto cited = covering_tokens(x, rec.evidence);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto cat = risk_tokens.category(tokens[i]);
    if (!cat) continue;
    if (!cited.count(i) || !rec.risk_tags.count(*cat)) {
      v.risk_citation_consistent = false;
    }
  }

  std::size_t cited_high_risk = 0;
  for (auto i : cited) cited_high_risk += risk_tokens.is_high_risk(tokens[i]);
  v.contradiction_free =
      !(!critical && !cited.empty() && cited_high_risk == cited.size());
  v.unexplained_critical = critical && cited_high_risk == 0;
  return v;
}

ValiditySummary validity_rates(std::span<const LabeledValidity> records) {
  ValiditySummary s;
  auto add = [](FlagRate& r, bool flag) {
    ++r.total;
    r.count += flag;
  };
  for (const auto& r : records) {
    add(s.json_well_formed, r.validity.json_well_formed);
    add(s.spans_valid, r.validity.spans_valid);
    add(s.risk_citation_consistent, r.validity.risk_citation_consistent);
    add(s.contradiction_free, r.validity.contradiction_free);
    if (r.label_explained == Label::kCritical) {
      add(s.unexplained_critical, r.validity.unexplained_critical);
    }
  }
  for (auto* r : {&s.json_well_formed, &s.spans_valid,
                  &s.risk_citation_consistent, &s.contradiction_free,
                  &s.unexplained_critical}) {
    if (r->total > 0) {
      r->rate = static_cast<double>(r->count) / static_cast<double>(r->total);
    }
  }
  return s;
}

std::string audit_record_to_json(const AuditRecord& rec,
                                 const RecordValidity& validity) {
  nlohmann::ordered_json j;
  j["id"] = rec.frame_id;
  j["label_explained"] = to_string(rec.label_explained);
  j["evidence"] = rec.evidence;
  j["risk_tags"] = nlohmann::ordered_json::array();
  for (auto t : rec.risk_tags) j["risk_tags"].push_back(to_string(t));
  j["counterfactual"] =
      rec.counterfactual
          ? nlohmann::ordered_json{{"from", rec.counterfactual->from_token},
                                   {"to", rec.counterfactual->to_token}}
          : nlohmann::ordered_json();
  j["validity"] = {{"json_well_formed", validity.json_well_formed},
                   {"spans_valid", validity.spans_valid},
                   {"risk_citation_consistent",
                    validity.risk_citation_consistent},
                   {"contradiction_free", validity.contradiction_free},
                   {"unexplained_critical", validity.unexplained_critical}};
  j["attempts"] = rec.attempts;
  j["latency_ms"] = rec.latency_ms ? nlohmann::ordered_json(*rec.latency_ms)
                                   : nlohmann::ordered_json();
  j["input_tokens"] = rec.token_usage
                          ? nlohmann::ordered_json(rec.token_usage->input_tokens)
                          : nlohmann::ordered_json();
  j["output_tokens"] =
      rec.token_usage ? nlohmann::ordered_json(rec.token_usage->output_tokens)
                      : nlohmann::ordered_json();
  if (!rec.error.empty()) j["error"] = rec.error;
  return j.dump();
}

StoredAudit audit_record_from_json(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (!j.is_object()) throw Error("audit record: not a JSON object");
  StoredAudit out;
  auto& rec = out.record;
  try {
    rec.frame_id = j.at("id").get<std::uint64_t>();
    auto label = parse_label(j.at("label_explained").get<std::string>());
    if (!label) throw Error("audit record: bad label");
    rec.label_explained = *label;
    rec.evidence = j.at("evidence").get<std::vector<std::string>>();
    for (const auto& t : j.at("risk_tags")) {
      auto tag = parse_risk_tag(t.get<std::string>());
      if (!tag) throw Error("audit record: bad risk tag");
      rec.risk_tags.insert(*tag);
    }
    const auto& cf = j.at("counterfactual");
    if (!cf.is_null()) {
      rec.counterfactual = Counterfactual{cf.at("from").get<std::string>(),
                                          cf.at("to").get<std::string>()};
    }
    const auto& v = j.at("validity");
    out.validity.json_well_formed = v.at("json_well_formed").get<bool>();
    out.validity.spans_valid = v.at("spans_valid").get<bool>();
    out.validity.risk_citation_consistent =
        v.at("risk_citation_consistent").get<bool>();
    out.validity.contradiction_free = v.at("contradiction_free").get<bool>();
    out.validity.unexplained_critical =
        v.at("unexplained_critical").get<bool>();
    rec.json_well_formed = out.validity.json_well_formed;
    rec.attempts = j.value("attempts", 1);
    if (j.contains("latency_ms") && !j["latency_ms"].is_null()) {
      rec.latency_ms = j["latency_ms"].get<double>();
    }
    if (j.contains("input_tokens") && !j["input_tokens"].is_null()) {
      rec.token_usage = TokenUsage{j["input_tokens"].get<std::int64_t>(),
                                   j.value("output_tokens", std::int64_t{0})};
    }
    rec.error = j.value("error", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("audit record: ") + e.what());
  }
  return out;
}

}  // namespace modtriage
