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

#include "modtriage/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"
#include "modtriage/util.hpp"

namespace modtriage {

namespace {

using ojson = nlohmann::ordered_json;

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(); }

ojson flag_rate_json(const FlagRate& f) {
  return {{"count", f.count}, {"total", f.total}, {"rate", opt(f.rate)}};
}

ojson metrics_json(const MethodMetrics& m) {
  const auto& s = m.metrics;
  return {{"method", m.method},
          {"accuracy", s.accuracy},
          {"macro_f1", s.macro_f1},
          {"recall_critical", s.recall_critical},
          {"f1_critical", s.f1_critical},
          {"f1_normal", s.f1_normal},
          {"confusion",
           {{"tp", s.confusion.tp},
            {"fp", s.confusion.fp},
            {"fn", s.confusion.fn},
            {"tn", s.confusion.tn}}}};
}

ojson curve_json(const PassCurve& c) {
  ojson rows = ojson::array();
  for (std::size_t e = 0; e < c.epsilons.size(); ++e) {
    rows.push_back({{"epsilon", c.epsilons[e]},
                    {"pass_rate", c.pass_rate[e]},
                    {"ci_low", c.ci_low[e]},
                    {"ci_high", c.ci_high[e]}});
  }
  ojson j{{"kind", to_string(c.kind)}, {"cases", c.cases}, {"points", rows}};
  if (c.flip_baseline) j["flip_baseline"] = *c.flip_baseline;
  return j;
}

ojson decomposition_json(const NecessityDecomposition& d) {
  ojson by_class = ojson::array();
  for (const auto& r : d.by_class) {
    by_class.push_back({{"label", to_string(r.label)},
                        {"count", r.count},
                        {"flip_rate", r.flip_rate},
                        {"mean_delta", r.mean_delta}});
  }
  ojson by_tokens = ojson::array();
  for (const auto& r : d.by_tokens_removed) {
    by_tokens.push_back({{"tokens_removed", r.bucket},
                         {"count", r.count},
                         {"mean_delta", r.mean_delta}});
  }
  ojson j{{"count", d.count},
          {"flip_rate", d.flip_rate},
          {"mean_delta", d.mean_delta},
          {"by_class", by_class},
          {"by_tokens_removed", by_tokens}};
  j["delta_quartiles"] =
      d.delta_quartiles
          ? ojson::array({(*d.delta_quartiles)[0], (*d.delta_quartiles)[1],
                          (*d.delta_quartiles)[2]})
          : ojson();
  return j;
}

ojson latency_json(const LatencyCost& l) {
  ojson j{{"median_s", l.median_s},
          {"p95_s", l.p95_s},
          {"p99_s", l.p99_s},
          {"sample_count", l.sample_count},
          {"filtered_count", l.filtered_count}};
  j["fences"] = l.fences ? ojson{{"low_s", l.fences->low},
                                 {"high_s", l.fences->high}}
                         : ojson();
  j["cost_per_1k"] = l.cost_per_1k ? ojson{{"low", l.cost_per_1k->low},
                                           {"high", l.cost_per_1k->high}}
                                   : ojson();
  return j;
}

std::string pct(double v) { return format_double(std::round(v * 1e4) / 1e2) + "%"; }

std::string pct(const FlagRate& f) {
  return f.rate ? pct(*f.rate) + " (" + std::to_string(f.count) + "/" +
                      std::to_string(f.total) + ")"
                : "n/a";
}

std::string fixed4(double v) { return format_double(std::round(v * 1e4) / 1e4); }

}  // namespace

MetricsSummary metrics_from_confusion(const Confusion& c, Warnings* warnings) {
  auto warn = [&](std::string w) {
    if (warnings) warnings->push_back(std::move(w));
  };
  MetricsSummary m;
  m.confusion = c;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.recall_critical = ratio(c.tp, c.tp + c.fn);
  if (c.tp + c.fn == 0) warn("recall_critical undefined (no critical gold); reported as 0");
  m.f1_critical = f1_critical(c);
  m.f1_normal = f1_normal(c);
  if (2 * c.tp + c.fp + c.fn == 0) {
    warn("critical class absent from gold and predictions; its F1 is 0");
  }
  if (2 * c.tn + c.fp + c.fn == 0) {
    warn("normal class absent from gold and predictions; its F1 is 0");
  }
  m.macro_f1 = (m.f1_critical + m.f1_normal) / 2.0;
  return m;
}

MetricsSummary compute_metrics(std::span<const KeyedLabel> predictions,
                               std::span<const KeyedLabel> gold,
                               Warnings* warnings) {
  std::map<std::uint64_t, Label> truth(gold.begin(), gold.end());
  std::map<std::uint64_t, Label> pred(predictions.begin(), predictions.end());
  if (truth.size() != gold.size() || pred.size() != predictions.size()) {
    throw MetricsError("compute_metrics: duplicate frame ids");
  }
  std::vector<std::uint64_t> missing_gold, missing_pred;
  for (const auto& [id, _] : pred) {
    if (!truth.count(id)) missing_gold.push_back(id);
  }
  for (const auto& [id, _] : truth) {
    if (!pred.count(id)) missing_pred.push_back(id);
  }
  if (!missing_gold.empty() || !missing_pred.empty()) {
    std::string msg = "compute_metrics: id mismatch;";
    auto list = [&](const char* what, const std::vector<std::uint64_t>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) {
        msg += " " + std::to_string(ids[i]);
      }
      if (ids.size() > 20) msg += " ... (" + std::to_string(ids.size()) + ")";
    };
    list("no gold label for", missing_gold);
    list("no prediction for", missing_pred);
    throw MetricsError(msg);
  }
  if (pred.empty()) throw MetricsError("compute_metrics: empty evaluation set");
  Confusion c;
  for (const auto& [id, y_hat] : pred) {
    bool crit_gold = truth[id] == Label::kCritical;
    bool crit_pred = y_hat == Label::kCritical;
    if (crit_gold && crit_pred) ++c.tp;
    else if (!crit_gold && crit_pred) ++c.fp;
    else if (crit_gold) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_confusion(c, warnings);
}

TukeyFences tukey_fences(std::span<const double> values) {
  if (values.size() < 4) {
    throw PreconditionError("tukey_fences: need at least 4 samples");
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double q1 = nearest_rank<double>(sorted, 25, 100);
  double q3 = nearest_rank<double>(sorted, 75, 100);
  double iqr = q3 - q1;
  return {q1 - 1.5 * iqr, q3 + 1.5 * iqr};
}

std::vector<double> tukey_filter(std::span<const double> values,
                                 const TukeyFences& fences) {
  std::vector<double> out;
  std::copy_if(values.begin(), values.end(), std::back_inserter(out),
               [&](double v) { return v >= fences.low && v <= fences.high; });
  return out;
}

double cost_per_1k(double mean_input_tokens, double mean_output_tokens,
                   const PriceTable& prices, double overhead_tokens) {
  return 1000.0 *
         ((mean_input_tokens + overhead_tokens) * prices.input_per_million +
          mean_output_tokens * prices.output_per_million) /
         1e6;
}

CostRange cost_range_per_1k(double mean_input_tokens, double mean_output_tokens,
                            const PriceTable& prices,
                            const OverheadRange& overhead) {
  return {cost_per_1k(mean_input_tokens, mean_output_tokens, prices,
                      overhead.low),
          cost_per_1k(mean_input_tokens, mean_output_tokens, prices,
                      overhead.high)};
}

LatencyCost latency_summary(std::span<const double> latencies_s,
                            const PriceTable& prices,
                            const std::optional<UsageTotals>& usage,
                            const OverheadRange& overhead,
                            Warnings* warnings) {
  if (latencies_s.empty()) {
    throw PreconditionError("latency_summary: no latency samples");
  }
  LatencyCost out;
  out.sample_count = latencies_s.size();
  std::vector<double> kept;
  if (latencies_s.size() < 4) {
    if (warnings) {
      warnings->push_back("latency: fewer than 4 samples, fences skipped");
    }
    kept.assign(latencies_s.begin(), latencies_s.end());
  } else {
    out.fences = tukey_fences(latencies_s);
    kept = tukey_filter(latencies_s, *out.fences);
  }
  out.filtered_count = kept.size();
  std::sort(kept.begin(), kept.end());
  out.median_s = nearest_rank<double>(kept, 50, 100);
  out.p95_s = nearest_rank<double>(kept, 95, 100);
  out.p99_s = nearest_rank<double>(kept, 99, 100);
  if (usage && usage->calls > 0) {
    auto calls = static_cast<double>(usage->calls);
    out.cost_per_1k = cost_range_per_1k(
        static_cast<double>(usage->input_tokens) / calls,
        static_cast<double>(usage->output_tokens) / calls, prices, overhead);
  }
  return out;
}

ReportBundle emit_report(const ReportInputs& in) {
  if (in.methods.empty()) {
    throw PreconditionError("emit_report: no method metrics");
  }
  ojson j;
  j["run"] = in.run_json.empty() ? ojson() : ojson::parse(in.run_json);
  j["classification"] = ojson::array();
  for (const auto& m : in.methods) j["classification"].push_back(metrics_json(m));

  if (in.validity) {
    j["audit_validity"] = {
        {"json_well_formed", flag_rate_json(in.validity->json_well_formed)},
        {"spans_valid", flag_rate_json(in.validity->spans_valid)},
        {"risk_citation_consistent",
         flag_rate_json(in.validity->risk_citation_consistent)},
        {"contradiction_free", flag_rate_json(in.validity->contradiction_free)},
        {"unexplained_critical",
         flag_rate_json(in.validity->unexplained_critical)}};
  } else {
    j["audit_validity"] = {{"absent", true}};
  }
  if (!in.curves.empty()) {
    j["probe_curves"] = ojson::array();
    for (const auto& c : in.curves) j["probe_curves"].push_back(curve_json(c));
  } else {
    j["probe_curves"] = {{"absent", true}};
  }
  j["necessity_decomposition"] = in.decomposition
                                     ? decomposition_json(*in.decomposition)
                                     : ojson{{"absent", true}};
  j["latency"] = in.latency ? latency_json(*in.latency) : ojson{{"absent", true}};
  j["sources"] = ojson::array();
  for (const auto& s : in.sources) {
    j["sources"].push_back({{"artifact", s.name}, {"sha256", s.sha256}});
  }
  j["warnings"] = in.warnings;

  ReportBundle b;
  b.report_json = j.dump(2) + "\n";

  b.metrics_csv =
      "method,accuracy,macro_f1,recall_critical,f1_critical,tp,fp,fn,tn\n";
  for (const auto& m : in.methods) {
    const auto& s = m.metrics;
    b.metrics_csv += m.method + "," + format_double(s.accuracy) + "," +
                     format_double(s.macro_f1) + "," +
                     format_double(s.recall_critical) + "," +
                     format_double(s.f1_critical) + "," +
                     std::to_string(s.confusion.tp) + "," +
                     std::to_string(s.confusion.fp) + "," +
                     std::to_string(s.confusion.fn) + "," +
                     std::to_string(s.confusion.tn) + "\n";
  }

  std::string& t = b.summary_text;
  t += "Classification\n";
  for (const auto& m : in.methods) {
    const auto& s = m.metrics;
    t += "  " + m.method + ": accuracy " + fixed4(s.accuracy) + ", macro-F1 " +
         fixed4(s.macro_f1) + ", recall(critical) " +
         fixed4(s.recall_critical) + ", F1(critical) " +
         fixed4(s.f1_critical) + " [n=" +
         std::to_string(s.confusion.total()) + "]\n";
  }
  if (in.validity) {
    const auto& v = *in.validity;
    t += "Audit records\n";
    t += "  well-formed JSON      " + pct(v.json_well_formed) + "\n";
    t += "  spans valid           " + pct(v.spans_valid) + "\n";
    t += "  risk-tag consistent   " + pct(v.risk_citation_consistent) + "\n";
    t += "  contradiction-free    " + pct(v.contradiction_free) + "\n";
    t += "  unexplained critical  " + pct(v.unexplained_critical) + "\n";
  }
  for (const auto& c : in.curves) {
    t += "Probe " + std::string(to_string(c.kind)) + " (" +
         std::to_string(c.cases) + " cases)\n";
    for (std::size_t e = 0; e < c.epsilons.size(); ++e) {
      t += "  eps " + format_double(c.epsilons[e]) + ": " + pct(c.pass_rate[e]) +
           " [" + pct(c.ci_low[e]) + ", " + pct(c.ci_high[e]) + "]\n";
    }
    if (c.flip_baseline) t += "  strict flip rate " + pct(*c.flip_baseline) + "\n";
  }
  if (in.latency) {
    const auto& l = *in.latency;
    t += "Latency: median " + fixed4(l.median_s) + " s, p95 " +
         fixed4(l.p95_s) + " s, p99 " + fixed4(l.p99_s) + " s (" +
         std::to_string(l.filtered_count) + "/" +
         std::to_string(l.sample_count) + " kept)\n";
    if (l.cost_per_1k) {
      t += "Cost per 1k inferences: " + fixed4(l.cost_per_1k->low) + " to " +
           fixed4(l.cost_per_1k->high) + "\n";
    }
  }
  for (const auto& w : in.warnings) t += "warning: " + w + "\n";
  return b;
}

}  // namespace modtriage
