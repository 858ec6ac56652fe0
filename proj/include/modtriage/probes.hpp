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

#ifndef MODTRIAGE_PROBES_HPP_
#define MODTRIAGE_PROBES_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modtriage/audit.hpp"
#include "modtriage/classify.hpp"
#include "modtriage/encode.hpp"

namespace modtriage {

enum class ProbeKind { kSufficiency, kNecessity, kCounterfactual };
enum class ProbeStatus {
  kScored,
  kNotApplicable,  // excluded from every denominator
  kInvalidEdit,    // counterfactual that cannot be applied; counts as failure
};

std::string_view to_string(ProbeKind k);
std::optional<ProbeKind> parse_probe_kind(std::string_view s);
std::string_view to_string(ProbeStatus s);
std::optional<ProbeStatus> parse_probe_status(std::string_view s);

// Confidence differences are compared on a 1e-9 grid so decimal scores such
// as 0.7 - 0.6 compare equal to 0.1.
inline constexpr double kScoreResolution = 1e-9;
double score_delta(double a, double b);  // a - b, quantized

struct ProbeResult {
  std::uint64_t frame_id = 0;
  ProbeKind kind = ProbeKind::kSufficiency;
  ProbeStatus status = ProbeStatus::kScored;
  Label y_orig = Label::kNormal;
  double s_orig = 0.0;
  std::optional<Label> y_probe;
  std::optional<double> s_probe;
  bool flipped = false;
  std::optional<double> delta_minus;       // necessity only, clamped >= 0
  std::optional<double> score_change;      // s_probe - s_orig
  std::optional<std::size_t> tokens_removed;  // necessity only
  std::string probe_input;
  std::string config_hash;
  std::string note;
};

// Keeps only the tokens covered by the cited evidence, in input order.
ProbeResult sufficiency_probe(const TokenString& x, const AuditRecord& record,
                              const Prediction& original,
                              const Classifier& clf);

// Deletes the covered tokens, keeping order and single spacing.
ProbeResult necessity_probe(const TokenString& x, const AuditRecord& record,
                            const Prediction& original, const Classifier& clf);

// Replaces the first occurrence of from_token by to_token. Success is a strict
// label flip.
ProbeResult counterfactual_probe(const TokenString& x,
                                 const AuditRecord& record,
                                 const Prediction& original,
                                 const Classifier& clf);

// Per-case pass at tolerance eps:
//   sufficiency     label kept and s_probe >= s_orig - eps
//   necessity       flipped or delta_minus >= eps
//   counterfactual  flipped (eps unused)
bool passes(const ProbeResult& r, double eps);

// Criterion plotted against eps. Identical to `passes` except sufficiency,
// which requires a gain: label kept and s_probe - s_orig >= eps. Every curve
// is nonincreasing in eps.
bool curve_passes(const ProbeResult& r, double eps);

struct BootstrapSettings {
  std::size_t resamples = 1000;
  std::uint64_t seed = 20240501;
};

inline const std::vector<double>& default_epsilons() {
  static const std::vector<double> kGrid{0.0, 0.005, 0.01, 0.02, 0.05, 0.1};
  return kGrid;
}

struct PassCurve {
  ProbeKind kind = ProbeKind::kSufficiency;
  std::vector<double> epsilons;
  std::vector<double> pass_rate;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::size_t cases = 0;
  std::optional<double> flip_baseline;  // necessity strict flip rate
};

// Results of other kinds are ignored. Percentile 95% intervals from
// case-level resampling with a fixed seed. Throws PreconditionError when no
// applicable result of `kind` exists.
PassCurve pass_curve(std::span<const ProbeResult> results, ProbeKind kind,
                     std::span<const double> epsilons,
                     const BootstrapSettings& bootstrap = {});

struct DecompositionClassRow {
  Label label = Label::kNormal;
  std::size_t count = 0;
  double flip_rate = 0.0;
  double mean_delta = 0.0;
};

struct DecompositionTokenRow {
  std::string bucket;  // "1", "2", "3+"
  std::size_t count = 0;
  double mean_delta = 0.0;
};

struct NecessityDecomposition {
  std::vector<DecompositionClassRow> by_class;  // classes present only
  std::vector<DecompositionTokenRow> by_tokens_removed;
  std::size_t count = 0;
  double flip_rate = 0.0;
  double mean_delta = 0.0;
  std::optional<std::array<double, 3>> delta_quartiles;
};

NecessityDecomposition necessity_decomposition(
    std::span<const ProbeResult> results);

struct ProbeCase {
  std::uint64_t frame_id = 0;
  TokenString x;
  Prediction original;
  AuditRecord record;
};

// All three probes per case, ordered by frame id then kind.
std::vector<ProbeResult> run_probes(std::span<const ProbeCase> cases,
                                    const Classifier& clf,
                                    std::size_t parallelism = 1);

std::string probe_result_to_json(const ProbeResult& r);
ProbeResult probe_result_from_json(std::string_view line);

// `epsilon,pass_rate,ci_low,ci_high`
std::string pass_curve_to_csv(const PassCurve& curve);

}  // namespace modtriage

#endif  // MODTRIAGE_PROBES_HPP_
