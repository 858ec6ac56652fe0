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

#include "modtriage/classify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "modtriage/confusion.hpp"
#include "modtriage/util.hpp"

namespace modtriage {

Prediction classify(const Classifier& clf, std::string_view x) {
  if (x.empty()) {
    throw PreconditionError("classify: empty token string");
  }
  if (!is_full_grammar(x)) {
    throw PreconditionError("classify: not a valid token string: '" +
                            std::string(x) + "'");
  }
  return clf.predict(x);
}

Prediction rule_classify(std::string_view x, const RuleSet& rules) {
  auto tokens = parse_fragment(x);
  if (!tokens) {
    throw PreconditionError("rule_classify: not a token sequence: '" +
                            std::string(x) + "'");
  }
  auto fired = rules.triggers(*tokens);
  Prediction p;
  p.label = fired.empty() ? Label::kNormal : Label::kCritical;
  p.confidence = rules.confidence_for(fired.size());
  if (fired.empty()) {
    p.rationale = x.empty() ? "Empty input carries no risk cue."
                            : "No risk cue fired; consistent with routine traffic.";
  } else {
    p.rationale = "Risk cues fired on";
    for (std::size_t i = 0; i < fired.size(); ++i) {
      p.rationale += (i ? ", " : " ") + fired[i].token;
    }
    p.rationale += ".";
  }
  return p;
}

Prediction RuleClassifier::predict(std::string_view text) const {
  return rule_classify(text, rules_);
}

// ---------------------------------------------------------------------------

ThresholdSweep sweep_threshold(std::span<const ScoredExample> validation) {
  std::size_t pos_total = 0;
  for (const auto& e : validation) pos_total += e.label == Label::kCritical;
  const std::size_t neg_total = validation.size() - pos_total;
  if (pos_total == 0 || neg_total == 0) {
    throw PreconditionError(
        "sweep_threshold: validation split must contain both classes (" +
        std::to_string(pos_total) + " critical, " + std::to_string(neg_total) +
        " normal)");
  }

  std::vector<ScoredExample> sorted(validation.begin(), validation.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.score < b.score; });

  std::vector<double> candidates{0.0};
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].score != sorted[i - 1].score) {
      candidates.push_back((sorted[i - 1].score + sorted[i].score) / 2.0);
    }
  }
  candidates.push_back(1.0);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  ThresholdSweep out;
  out.candidates = candidates.size();
  if (sorted.front().score == sorted.back().score) {
    out.warnings.push_back(
        "sweep_threshold: all validation scores identical; threshold is "
        "uninformative");
  }

  // Scores below the current candidate are predicted normal.
  std::size_t below = 0, pos_below = 0;
  bool have_best = false;
  for (double tau : candidates) {
    while (below < sorted.size() && sorted[below].score < tau) {
      pos_below += sorted[below].label == Label::kCritical;
      ++below;
    }
    Confusion c;
    c.tp = pos_total - pos_below;
    c.fn = pos_below;
    c.fp = (sorted.size() - below) - c.tp;
    c.tn = neg_total - c.fp;
    double f1 = macro_f1(c);
    if (!have_best || f1 > out.macro_f1 + 1e-12) {
      out.tau = tau;
      out.macro_f1 = f1;
      have_best = true;
    }
  }
  return out;
}

double ScoredBaseline::score(const NumericView& v) const {
  auto x = v.as_array();
  double z = bias;
  for (std::size_t i = 0; i < x.size(); ++i) {
    z += weights[i] * (x[i] - mean[i]) / scale[i];
  }
  return 1.0 / (1.0 + std::exp(-z));
}

std::string ScoredBaseline::to_json() const {
  nlohmann::ordered_json j;
  j["features"] = {"function_code", "len_bucket", "iat_bucket",
                   "exception_code", "direction", "unit_id"};
  j["weights"] = weights;
  j["bias"] = bias;
  j["mean"] = mean;
  j["scale"] = scale;
  j["threshold"] = threshold;
  j["frozen"] = frozen;
  return j.dump(2) + "\n";
}

ScoredBaseline ScoredBaseline::from_json(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (!j.is_object()) throw ConfigError("baseline model: not a JSON object");
  ScoredBaseline m;
  try {
    m.weights = j.at("weights").get<std::array<double, 6>>();
    m.bias = j.at("bias").get<double>();
    m.mean = j.at("mean").get<std::array<double, 6>>();
    m.scale = j.at("scale").get<std::array<double, 6>>();
    m.threshold = j.at("threshold").get<double>();
    m.frozen = j.at("frozen").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("baseline model: ") + e.what());
  }
  return m;
}

ScoredBaseline train_baseline(std::span<const NumericView> features,
                              std::span<const Label> labels,
                              const BaselineTrainOptions& options) {
  if (features.size() != labels.size() || features.empty()) {
    throw PreconditionError("train_baseline: need matching, nonempty inputs");
  }
  const std::size_t n = features.size();
  std::vector<std::array<double, 6>> x(n);
  ScoredBaseline m;
  for (std::size_t i = 0; i < n; ++i) x[i] = features[i].as_array();
  for (std::size_t k = 0; k < 6; ++k) {
    double sum = 0, sq = 0;
    for (const auto& row : x) sum += row[k];
    m.mean[k] = sum / static_cast<double>(n);
    for (const auto& row : x) sq += (row[k] - m.mean[k]) * (row[k] - m.mean[k]);
    double sd = std::sqrt(sq / static_cast<double>(n));
    m.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  for (auto& row : x) {
    for (std::size_t k = 0; k < 6; ++k) row[k] = (row[k] - m.mean[k]) / m.scale[k];
  }

  std::size_t pos = 0;
  for (auto l : labels) pos += l == Label::kCritical;
  const double w_pos = pos ? static_cast<double>(n) / (2.0 * pos) : 0.0;
  const double w_neg = pos < n ? static_cast<double>(n) / (2.0 * (n - pos)) : 0.0;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::array<double, 6> grad{};
    double grad_b = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = m.bias;
      for (std::size_t k = 0; k < 6; ++k) z += m.weights[k] * x[i][k];
      double p = 1.0 / (1.0 + std::exp(-z));
      bool y = labels[i] == Label::kCritical;
      double err = (p - (y ? 1.0 : 0.0)) * (y ? w_pos : w_neg);
      for (std::size_t k = 0; k < 6; ++k) grad[k] += err * x[i][k];
      grad_b += err;
    }
    for (std::size_t k = 0; k < 6; ++k) {
      m.weights[k] -= options.learning_rate *
                      (grad[k] / static_cast<double>(n) + options.l2 * m.weights[k]);
    }
    m.bias -= options.learning_rate * grad_b / static_cast<double>(n);
  }
  return m;
}

ThresholdSweep freeze_threshold(ScoredBaseline& model,
                                std::span<const NumericView> features,
                                std::span<const Label> labels) {
  if (model.frozen) {
    throw PreconditionError("freeze_threshold: threshold already frozen");
  }
  std::vector<ScoredExample> scored;
  scored.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    scored.push_back({model.score(features[i]), labels[i]});
  }
  auto sweep = sweep_threshold(scored);
  model.threshold = sweep.tau;
  model.frozen = true;
  return sweep;
}

Prediction baseline_predict(const NumericView& x, const ScoredBaseline& model) {
  if (!model.frozen) {
    throw PreconditionError("baseline_predict: threshold not frozen");
  }
  Prediction p;
  p.confidence = model.score(x);
  p.label = p.confidence >= model.threshold ? Label::kCritical : Label::kNormal;
  p.rationale = "Baseline score " + format_double(p.confidence) +
                (p.label == Label::kCritical ? " >= " : " < ") + "threshold " +
                format_double(model.threshold) + ".";
  return p;
}

BaselineClassifier::BaselineClassifier(ScoredBaseline model)
    : model_(std::move(model)) {
  if (!model_.frozen) {
    throw PreconditionError("BaselineClassifier: threshold not frozen");
  }
}

Prediction BaselineClassifier::predict(std::string_view text) const {
  auto tokens = parse_fragment(text);
  if (!tokens) {
    throw PreconditionError("baseline: not a token sequence: '" +
                            std::string(text) + "'");
  }
  return baseline_predict(numeric_from_tokens(*tokens), model_);
}

std::string BaselineClassifier::fingerprint() const {
  return sha256_hex(model_.to_json());
}

// ---------------------------------------------------------------------------

std::string prediction_to_json(std::uint64_t id, const Prediction& p) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["label"] = to_string(p.label);
  j["confidence"] = p.confidence;
  j["rationale"] = p.rationale;
  j["latency_ms"] = p.latency_ms ? nlohmann::ordered_json(*p.latency_ms)
                                 : nlohmann::ordered_json();
  j["input_tokens"] = p.token_usage
                          ? nlohmann::ordered_json(p.token_usage->input_tokens)
                          : nlohmann::ordered_json();
  j["output_tokens"] = p.token_usage
                           ? nlohmann::ordered_json(p.token_usage->output_tokens)
                           : nlohmann::ordered_json();
  j["attempts"] = p.attempts;
  if (!p.lint.empty()) j["lint"] = p.lint;
  return j.dump();
}

KeyedPrediction prediction_from_json(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (!j.is_object()) throw Error("prediction record: not a JSON object");
  KeyedPrediction kp;
  try {
    kp.frame_id = j.at("id").get<std::uint64_t>();
    auto label = parse_label(j.at("label").get<std::string>());
    if (!label) throw Error("prediction record: bad label");
    kp.prediction.label = *label;
    kp.prediction.confidence = j.at("confidence").get<double>();
    kp.prediction.rationale = j.value("rationale", std::string());
    if (j.contains("latency_ms") && !j["latency_ms"].is_null()) {
      kp.prediction.latency_ms = j["latency_ms"].get<double>();
    }
    if (j.contains("input_tokens") && !j["input_tokens"].is_null()) {
      kp.prediction.token_usage =
          TokenUsage{j["input_tokens"].get<std::int64_t>(),
                     j.value("output_tokens", std::int64_t{0})};
    }
    kp.prediction.attempts = j.value("attempts", 1);
    if (j.contains("lint")) kp.prediction.lint = j["lint"].get<Warnings>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("prediction record: ") + e.what());
  }
  return kp;
}

void parallel_for(std::size_t n, std::size_t parallelism,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t workers = std::clamp<std::size_t>(parallelism, 1, n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex mu;
  auto work = [&] {
    while (!failed.load()) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace modtriage
