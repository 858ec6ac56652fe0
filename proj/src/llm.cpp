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

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>

#include "httplib.h"
#include "json.hpp"
#include "modtriage/classify.hpp"
#include "modtriage/util.hpp"

namespace modtriage {

namespace {

std::string read_text_if_exists(const std::filesystem::path& p) {
  return std::filesystem::exists(p) ? read_file(p) : std::string();
}

// Drops a surrounding ```json ... ``` fence if the model added one.
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

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

void PromptConfig::validate() const {
  if (decoding.temperature != 0.0) {
    throw ConfigError("prompt config: decoding temperature must be 0");
  }
  if (exemplars.size() > kMaxExemplars) {
    throw ConfigError("prompt config: " + std::to_string(exemplars.size()) +
                      " exemplars exceeds the few-shot limit of " +
                      std::to_string(kMaxExemplars));
  }
  if (system_text.empty()) {
    throw ConfigError("prompt config: empty system text");
  }
}

std::string PromptConfig::fingerprint() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["system"] = system_text;
  j["legend"] = schema_legend_text;
  j["exemplars"] = nlohmann::ordered_json::array();
  for (const auto& e : exemplars) {
    j["exemplars"].push_back({{"input", e.input}, {"output", e.output}});
  }
  j["cues"] = safety_cues;
  j["decoding"] = {{"temperature", decoding.temperature},
                   {"top_p", decoding.top_p},
                   {"seed", decoding.seed}};
  return sha256_hex(j.dump());
}

PromptConfig load_prompt_config(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("prompt directory not found: " + dir.string());
  }
  PromptConfig cfg;
  cfg.system_text = read_file(dir / "system.txt");
  cfg.schema_legend_text = read_text_if_exists(dir / "legend.txt");
  const auto exemplars = read_text_if_exists(dir / "exemplars.jsonl");
  for (auto line : split(exemplars, '\n')) {
    line = trim(line);
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_object() || !j.contains("input") || !j.contains("output")) {
      throw ConfigError("exemplars.jsonl: each line needs input and output");
    }
    Exemplar e;
    e.input = j["input"].get<std::string>();
    e.output = j["output"].is_string() ? j["output"].get<std::string>()
                                       : j["output"].dump();
    cfg.exemplars.push_back(std::move(e));
  }
  const auto cues = read_text_if_exists(dir / "cues.txt");
  for (auto line : split(cues, '\n')) {
    line = trim(line);
    if (!line.empty() && line.front() != '#') cfg.safety_cues.emplace_back(line);
  }
  return cfg;
}

ChatRequest build_chat_request(const PromptConfig& cfg, std::string_view x) {
  ChatRequest req;
  req.model = cfg.model;
  req.decoding = cfg.decoding;
  std::string system = cfg.system_text;
  if (!cfg.schema_legend_text.empty()) {
    system += "\n\n" + cfg.schema_legend_text;
  }
  if (!cfg.safety_cues.empty()) {
    system += "\n\n### SAFETY CUES\n";
    for (const auto& cue : cfg.safety_cues) system += "- " + cue + "\n";
  }
  req.messages.push_back({"system", system});
  for (const auto& e : cfg.exemplars) {
    req.messages.push_back({"user", e.input});
    req.messages.push_back({"assistant", e.output});
  }
  req.messages.push_back({"user", std::string(x)});
  return req;
}

std::string chat_request_to_json(const ChatRequest& request) {
  nlohmann::ordered_json j;
  j["model"] = request.model;
  j["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : request.messages) {
    j["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  j["temperature"] = request.decoding.temperature;
  j["top_p"] = request.decoding.top_p;
  j["seed"] = request.decoding.seed;
  j["response_format"] = {{"type", "json_object"}};
  return j.dump();
}

ChatResponse chat_response_from_json(std::string_view body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  ChatResponse out;
  try {
    out.content = j.at("choices").at(0).at("message").at("content")
                      .get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("chat response: no choices[0].message.content");
  }
  if (j.contains("usage") && j["usage"].is_object()) {
    const auto& u = j["usage"];
    out.usage = TokenUsage{u.value("prompt_tokens", std::int64_t{0}),
                           u.value("completion_tokens", std::int64_t{0})};
  }
  return out;
}

HttpChatTransport::HttpChatTransport(std::string endpoint, std::string api_key,
                                     int timeout_s)
    : api_key_(std::move(api_key)), timeout_s_(timeout_s) {
  auto scheme_end = endpoint.find("://");
  auto path_start = endpoint.find('/', scheme_end == std::string::npos
                                           ? 0
                                           : scheme_end + 3);
  if (scheme_end == std::string::npos || path_start == std::string::npos) {
    throw ConfigError("endpoint must be an absolute URL with a path: " +
                      endpoint);
  }
  scheme_host_port_ = endpoint.substr(0, path_start);
  path_ = endpoint.substr(path_start);
}

ChatResponse HttpChatTransport::complete(const ChatRequest& request) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(timeout_s_);
  client.set_read_timeout(timeout_s_);
  httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
  auto res = client.Post(path_, headers, chat_request_to_json(request),
                         "application/json");
  if (!res) {
    throw TransportError("chat transport: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("chat transport: HTTP " + std::to_string(res->status));
  }
  return chat_response_from_json(res->body);
}

std::optional<ParsedClassifierReply> parse_classifier_reply(
    std::string_view content, std::string* reason) {
  auto fail = [&](std::string why) -> std::optional<ParsedClassifierReply> {
    if (reason) *reason = std::move(why);
    return std::nullopt;
  };
  auto j = nlohmann::json::parse(strip_code_fence(content), nullptr, false);
  if (j.is_discarded()) return fail("not JSON");
  if (!j.is_object()) return fail("top level is not an object");
  if (j.size() != 3 || !j.contains("label") || !j.contains("confidence") ||
      !j.contains("rationale")) {
    return fail("expected exactly label, confidence, rationale");
  }
  ParsedClassifierReply out;
  if (!j["label"].is_string()) return fail("label is not a string");
  auto raw = j["label"].get<std::string>();
  auto label = parse_label(raw);
  if (!label) {
    label = parse_label(lower(raw));
    if (!label) return fail("label '" + raw + "' is not normal/critical");
    out.lint.push_back("label '" + raw + "' normalized to '" +
                       std::string(to_string(*label)) + "'");
  }
  out.label = *label;
  if (!j["confidence"].is_number()) return fail("confidence is not a number");
  out.confidence = j["confidence"].get<double>();
  if (!(out.confidence >= 0.0 && out.confidence <= 1.0)) {
    return fail("confidence outside [0, 1]");
  }
  if (!j["rationale"].is_string()) return fail("rationale is not a string");
  out.rationale = j["rationale"].get<std::string>();
  return out;
}

RetryOutcome complete_with_retry(
    ChatTransport& transport, const ChatRequest& request, int max_attempts,
    const std::function<bool(const ChatResponse&)>& accept) {
  RetryOutcome out;
  int malformed = 0;
  std::string last_error;
  auto start = std::chrono::steady_clock::now();
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    out.attempts = attempt;
    ChatResponse resp;
    try {
      resp = transport.complete(request);
    } catch (const TransportError& e) {
      last_error = e.what();
      continue;
    }
    if (resp.usage) {
      out.usage_total.input_tokens += resp.usage->input_tokens;
      out.usage_total.output_tokens += resp.usage->output_tokens;
      out.usage_seen = true;
    }
    if (accept(resp)) {
      out.response = std::move(resp);
      out.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      return out;
    }
    ++malformed;
    last_error = "malformed response";
  }
  if (malformed == 0) {
    throw ClassifyError(ClassifyError::Kind::kBackendUnavailable,
                        "backend unavailable after " +
                            std::to_string(max_attempts) +
                            " attempts: " + last_error);
  }
  throw ClassifyError(ClassifyError::Kind::kMalformedResponseExhausted,
                      std::to_string(malformed) + " malformed response(s) in " +
                          std::to_string(max_attempts) + " attempts");
}

Prediction llm_classify(std::string_view x, const PromptConfig& cfg,
                        ChatTransport& transport, int max_attempts) {
  if (x.empty()) {
    throw PreconditionError("llm_classify: empty input");
  }
  auto request = build_chat_request(cfg, x);
  std::optional<ParsedClassifierReply> parsed;
  auto outcome = complete_with_retry(
      transport, request, max_attempts, [&](const ChatResponse& r) {
        parsed = parse_classifier_reply(r.content);
        return parsed.has_value();
      });
  Prediction p;
  // The label is the discrete reply field; confidence never decides it.
  p.label = parsed->label;
  p.confidence = parsed->confidence;
  p.rationale = parsed->rationale;
  p.lint = parsed->lint;
  p.attempts = outcome.attempts;
  p.latency_ms = outcome.elapsed_ms;
  if (outcome.usage_seen) p.token_usage = outcome.usage_total;
  return p;
}

LlmClassifier::LlmClassifier(PromptConfig cfg,
                             std::shared_ptr<ChatTransport> transport,
                             int max_attempts)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      max_attempts_(max_attempts) {
  cfg_.validate();
  if (!transport_) throw ConfigError("LlmClassifier: no transport");
}

Prediction LlmClassifier::predict(std::string_view text) const {
  return llm_classify(text, cfg_, *transport_, max_attempts_);
}

std::string LlmClassifier::fingerprint() const {
  return sha256_hex(cfg_.fingerprint() + "/attempts=" +
                    std::to_string(max_attempts_));
}

}  // namespace modtriage
