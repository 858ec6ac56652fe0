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

#ifndef MODTRIAGE_REPORT_HPP_
#define MODTRIAGE_REPORT_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modtriage/audit.hpp"
#include "modtriage/common.hpp"
#include "modtriage/confusion.hpp"
#include "modtriage/probes.hpp"

namespace modtriage {

struct MetricsSummary {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double recall_critical = 0.0;  // 0 with a warning when tp + fn == 0
  double f1_critical = 0.0;
  double f1_normal = 0.0;
  Confusion confusion;
};

MetricsSummary metrics_from_confusion(const Confusion& c,
                                      Warnings* warnings = nullptr);

using KeyedLabel = std::pair<std::uint64_t, Label>;

// Throws MetricsError listing the ids present on one side only, and on an
// empty evaluation set.
MetricsSummary compute_metrics(std::span<const KeyedLabel> predictions,
                               std::span<const KeyedLabel> gold,
                               Warnings* warnings = nullptr);

struct TukeyFences {
  double low = 0.0;
  double high = 0.0;
};

// Nearest-rank Q1/Q3 of the sample; fences at Q1 - 1.5 IQR and Q3 + 1.5 IQR.
// Requires at least 4 values.
TukeyFences tukey_fences(std::span<const double> values);

// Values inside the closed fence interval, original order kept.
std::vector<double> tukey_filter(std::span<const double> values,
                                 const TukeyFences& fences);

struct PriceTable {
  double input_per_million = 2.50;
  double output_per_million = 10.00;
};

struct OverheadRange {
  double low = 0.0;
  double high = 400.0;
};

struct CostRange {
  double low = 0.0;
  double high = 0.0;
};

// 1000 * ((mean_in + overhead) * in_price + mean_out * out_price) / 1e6
double cost_per_1k(double mean_input_tokens, double mean_output_tokens,
                   const PriceTable& prices, double overhead_tokens);
CostRange cost_range_per_1k(double mean_input_tokens, double mean_output_tokens,
                            const PriceTable& prices,
                            const OverheadRange& overhead);

struct UsageTotals {
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
  std::size_t calls = 0;
};

struct LatencyCost {
  double median_s = 0.0;
  double p95_s = 0.0;
  double p99_s = 0.0;
  std::optional<TukeyFences> fences;  // absent below 4 samples
  std::size_t sample_count = 0;
  std::size_t filtered_count = 0;     // samples kept after fencing
  std::optional<CostRange> cost_per_1k;  // absent without usage data
};

// Throws PreconditionError on an empty latency list.
LatencyCost latency_summary(std::span<const double> latencies_s,
                            const PriceTable& prices,
                            const std::optional<UsageTotals>& usage,
                            const OverheadRange& overhead = {},
                            Warnings* warnings = nullptr);

struct MethodMetrics {
  std::string method;
  MetricsSummary metrics;
};

struct SourceArtifact {
  std::string name;
  std::string sha256;
};

struct ReportInputs {
  std::string run_json;  // serialized run header, embedded verbatim
  std::vector<MethodMetrics> methods;
  std::optional<ValiditySummary> validity;
  std::vector<PassCurve> curves;
  std::optional<NecessityDecomposition> decomposition;
  std::optional<LatencyCost> latency;
  std::vector<SourceArtifact> sources;
  Warnings warnings;
};

struct ReportBundle {
  std::string report_json;
  std::string metrics_csv;
  std::string summary_text;
};

// Throws PreconditionError when no method metrics are present.
ReportBundle emit_report(const ReportInputs& in);

}  // namespace modtriage

#endif  // MODTRIAGE_REPORT_HPP_
