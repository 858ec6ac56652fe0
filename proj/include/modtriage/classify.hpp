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

#ifndef MODTRIAGE_CLASSIFY_HPP_
#define MODTRIAGE_CLASSIFY_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modtriage/common.hpp"
#include "modtriage/encode.hpp"
#include "modtriage/rules.hpp"

namespace modtriage {

struct TokenUsage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;

  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

// The classifier output (label, confidence). For the LLM path the label is the
// discrete response field; confidence is an uncalibrated score kept for
// analysis only.
struct Prediction {
  Label label = Label::kNormal;
  double confidence = 0.0;
  std::string rationale;
  std::optional<double> latency_ms;  // null for local back ends
  std::optional<TokenUsage> token_usage;
  int attempts = 1;
  Warnings lint;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

class ClassifyError : public Error {
 public:
  enum class Kind { kBackendUnavailable, kMalformedResponseExhausted };

  ClassifyError(Kind kind, const std::string& what)
      : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Common contract for every back end. `predict` accepts full token strings and
// the sub-grammar fragments built by the probes.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Prediction predict(std::string_view text) const = 0;
  // Whether an empty fragment may be scored (necessity probe with all tokens
  // cited).
  virtual bool accepts_empty_input() const { return false; }
  // Hash of everything that determines the decision (prompt, decoding, rules,
  // weights).
  virtual std::string fingerprint() const = 0;
  virtual std::string_view backend_name() const = 0;
};

// Decision pass: rejects input that is not a full six-token string before
// any back end is contacted.
Prediction classify(const Classifier& clf, std::string_view x);

// ---------------------------------------------------------------------------
// Rule stand-in

class RuleClassifier final : public Classifier {
 public:
  explicit RuleClassifier(RuleSet rules = RuleSet::defaults())
      : rules_(std::move(rules)) {}

  Prediction predict(std::string_view text) const override;
  bool accepts_empty_input() const override { return true; }
  std::string fingerprint() const override { return rules_.fingerprint(); }
  std::string_view backend_name() const override { return "rule"; }
  const RuleSet& rules() const { return rules_; }

 private:
  RuleSet rules_;
};

// Critical iff any rule fires; confidence = 0.5 + 0.1 * fired (cap 0.99).
Prediction rule_classify(std::string_view x, const RuleSet& rules);

// ---------------------------------------------------------------------------
// LLM path

struct DecodingSettings {
  double temperature = 0.0;
  double top_p = 1.0;
  std::int64_t seed = 0;
};

struct Exemplar {
  std::string input;
  std::string output;  // the exact assistant reply shown to the model
};

struct PromptConfig {
  std::string system_text;
  std::string schema_legend_text;
  std::vector<Exemplar> exemplars;
  std::vector<std::string> safety_cues;
  DecodingSettings decoding;
  std::string model = "gpt-4o";

  // Throws ConfigError unless temperature is 0 and the exemplar set is small.
  void validate() const;
  std::string fingerprint() const;
};

inline constexpr std::size_t kMaxExemplars = 16;

// Loads system.txt, legend.txt, exemplars.jsonl and cues.txt (optional)
// verbatim from `dir`.
PromptConfig load_prompt_config(const std::filesystem::path& dir);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  DecodingSettings decoding;
};

struct ChatResponse {
  std::string content;
  std::optional<TokenUsage> usage;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

// A chat-completions endpoint. Implementations must be safe to call from
// several threads at once.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// OpenAI-compatible chat-completions over HTTP(S).
class HttpChatTransport final : public ChatTransport {
 public:
  HttpChatTransport(std::string endpoint, std::string api_key,
                    int timeout_s = 60);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  int timeout_s_;
};

std::string chat_request_to_json(const ChatRequest& request);
// Extracts choices[0].message.content and usage from a response body.
ChatResponse chat_response_from_json(std::string_view body);

// System + legend + cues, then exemplars as user/assistant turns, then x.
ChatRequest build_chat_request(const PromptConfig& cfg, std::string_view x);

inline constexpr int kDefaultMaxAttempts = 3;

struct ParsedClassifierReply {
  Label label = Label::kNormal;
  double confidence = 0.0;
  std::string rationale;
  Warnings lint;
};

// Strict reply check: one top-level object with exactly label, confidence
// and rationale. Returns the reason on failure.
std::optional<ParsedClassifierReply> parse_classifier_reply(
    std::string_view content, std::string* reason = nullptr);

class LlmClassifier final : public Classifier {
 public:
  LlmClassifier(PromptConfig cfg, std::shared_ptr<ChatTransport> transport,
                int max_attempts = kDefaultMaxAttempts);

  Prediction predict(std::string_view text) const override;
  std::string fingerprint() const override;
  std::string_view backend_name() const override { return "llm"; }

 private:
  PromptConfig cfg_;
  std::shared_ptr<ChatTransport> transport_;
  int max_attempts_;
};

Prediction llm_classify(std::string_view x, const PromptConfig& cfg,
                        ChatTransport& transport,
                        int max_attempts = kDefaultMaxAttempts);

// Calls `transport` up to `max_attempts` times until `accept` returns true.
// Returns the accepted response and attempt count; throws ClassifyError
// (backend_unavailable when every attempt failed in transport, otherwise
// malformed_response_exhausted).
struct RetryOutcome {
  ChatResponse response;
  int attempts = 0;
  double elapsed_ms = 0.0;
  TokenUsage usage_total;
  bool usage_seen = false;
};
RetryOutcome complete_with_retry(
    ChatTransport& transport, const ChatRequest& request, int max_attempts,
    const std::function<bool(const ChatResponse&)>& accept);

// ---------------------------------------------------------------------------
// Scored baseline

struct ScoredExample {
  double score = 0.0;
  Label label = Label::kNormal;
};

struct ThresholdSweep {
  double tau = 0.0;
  double macro_f1 = 0.0;
  std::size_t candidates = 0;
  Warnings warnings;
};

// Macro-F1 maximizing threshold over {0, 1, midpoints of adjacent distinct
// scores}; ties go to the smaller tau. Throws PreconditionError when only
// one class is present.
ThresholdSweep sweep_threshold(std::span<const ScoredExample> validation);

// Logistic scorer over standardized NumericView features.
struct ScoredBaseline {
  std::array<double, 6> weights{};
  double bias = 0.0;
  std::array<double, 6> mean{};
  std::array<double, 6> scale{1, 1, 1, 1, 1, 1};
  double threshold = 0.5;
  bool frozen = false;

  double score(const NumericView& v) const;
  std::string to_json() const;
  static ScoredBaseline from_json(std::string_view text);
};

struct BaselineTrainOptions {
  int epochs = 400;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

// Full-batch gradient descent with inverse-frequency class weights.
ScoredBaseline train_baseline(std::span<const NumericView> features,
                              std::span<const Label> labels,
                              const BaselineTrainOptions& options = {});

// Sweeps the validation threshold and freezes the model.
ThresholdSweep freeze_threshold(ScoredBaseline& model,
                                std::span<const NumericView> features,
                                std::span<const Label> labels);

// critical iff score >= threshold; requires a frozen model.
Prediction baseline_predict(const NumericView& x, const ScoredBaseline& model);

class BaselineClassifier final : public Classifier {
 public:
  explicit BaselineClassifier(ScoredBaseline model);

  Prediction predict(std::string_view text) const override;
  std::string fingerprint() const override;
  std::string_view backend_name() const override { return "baseline"; }

 private:
  ScoredBaseline model_;
};

// ---------------------------------------------------------------------------

struct KeyedPrediction {
  std::uint64_t frame_id = 0;
  Prediction prediction;
};

std::string prediction_to_json(std::uint64_t id, const Prediction& p);
KeyedPrediction prediction_from_json(std::string_view line);

// Runs `fn(i)` for i in [0, n) with at most `parallelism` calls in flight.
// The first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t parallelism,
                  const std::function<void(std::size_t)>& fn);

}  // namespace modtriage

#endif  // MODTRIAGE_CLASSIFY_HPP_
