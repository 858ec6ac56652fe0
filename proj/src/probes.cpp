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

#include "modtriage/probes.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"
#include "modtriage/util.hpp"

namespace modtriage {

namespace {

bool spans_valid(const TokenString& x, const AuditRecord& rec) {
  return std::all_of(rec.evidence.begin(), rec.evidence.end(),
                     [&](const std::string& e) {
                       return !e.empty() && x.text.find(e) != std::string::npos;
                     });
}

ProbeResult base_result(const AuditRecord& record, const Prediction& original,
                        const Classifier& clf, ProbeKind kind) {
  ProbeResult r;
  r.frame_id = record.frame_id;
  r.kind = kind;
  r.y_orig = original.label;
  r.s_orig = original.confidence;
  r.config_hash = clf.fingerprint();
  return r;
}

void score(ProbeResult& r, const Classifier& clf) {
  auto p = clf.predict(r.probe_input);
  r.y_probe = p.label;
  r.s_probe = p.confidence;
  r.flipped = p.label != r.y_orig;
  r.score_change = score_delta(p.confidence, r.s_orig);
}

std::string join_tokens(const TokenString& x, const std::set<std::size_t>& keep,
                        bool keep_selected) {
  std::string out;
  for (std::size_t i = 0; i < x.tokens.size(); ++i) {
    if (keep.count(i) != keep_selected) continue;
    if (!out.empty()) out += ' ';
    out += x.tokens[i];
  }
  return out;
}

nlohmann::ordered_json opt_num(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
}

}  // namespace

std::string_view to_string(ProbeKind k) {
  switch (k) {
    case ProbeKind::kSufficiency: return "sufficiency";
    case ProbeKind::kNecessity: return "necessity";
    case ProbeKind::kCounterfactual: return "counterfactual";
  }
  return "?";
}

std::optional<ProbeKind> parse_probe_kind(std::string_view s) {
  if (s == "sufficiency") return ProbeKind::kSufficiency;
  if (s == "necessity") return ProbeKind::kNecessity;
  if (s == "counterfactual") return ProbeKind::kCounterfactual;
  return std::nullopt;
}

std::string_view to_string(ProbeStatus s) {
  switch (s) {
    case ProbeStatus::kScored: return "scored";
    case ProbeStatus::kNotApplicable: return "not_applicable";
    case ProbeStatus::kInvalidEdit: return "invalid_edit";
  }
  return "?";
}

std::optional<ProbeStatus> parse_probe_status(std::string_view s) {
  if (s == "scored") return ProbeStatus::kScored;
  if (s == "not_applicable") return ProbeStatus::kNotApplicable;
  if (s == "invalid_edit") return ProbeStatus::kInvalidEdit;
  return std::nullopt;
}

double score_delta(double a, double b) {
  return std::round((a - b) / kScoreResolution) * kScoreResolution;
}

ProbeResult sufficiency_probe(const TokenString& x, const AuditRecord& record,
                              const Prediction& original,
                              const Classifier& clf) {
  auto r = base_result(record, original, clf, ProbeKind::kSufficiency);
  if (!spans_valid(x, record)) {
    r.status = ProbeStatus::kNotApplicable;
    r.note = "evidence spans invalid";
    return r;
  }
  auto cover = covering_tokens(x, record.evidence);
  if (cover.empty()) {
    r.status = ProbeStatus::kNotApplicable;
    r.note = "empty evidence";
    return r;
  }
  r.probe_input = join_tokens(x, cover, true);
  score(r, clf);
  return r;
}

ProbeResult necessity_probe(const TokenString& x, const AuditRecord& record,
                            const Prediction& original, const Classifier& clf) {
  auto r = base_result(record, original, clf, ProbeKind::kNecessity);
  if (!spans_valid(x, record)) {
    r.status = ProbeStatus::kNotApplicable;
    r.note = "evidence spans invalid";
    return r;
  }
  auto cover = covering_tokens(x, record.evidence);
  if (cover.empty()) {
    r.status = ProbeStatus::kNotApplicable;
    r.note = "empty evidence";
    return r;
  }
  r.tokens_removed = cover.size();
  r.probe_input = join_tokens(x, cover, false);
  if (r.probe_input.empty()) {
    r.note = "empty input";
    if (!clf.accepts_empty_input()) {
      r.status = ProbeStatus::kNotApplicable;
      return r;
    }
  }
  score(r, clf);
  r.delta_minus = std::max(0.0, score_delta(r.s_orig, *r.s_probe));
  return r;
}

ProbeResult counterfactual_probe(const TokenString& x,
                                 const AuditRecord& record,
                                 const Prediction& original,
                                 const Classifier& clf) {
  auto r = base_result(record, original, clf, ProbeKind::kCounterfactual);
  const auto& cf = record.counterfactual;
  if (!cf || cf->from_token.empty() || cf->to_token.empty()) {
    r.status = ProbeStatus::kNotApplicable;
    r.note = "no edit";
    return r;
  }
  auto at = x.text.find(cf->from_token);
  if (at == std::string::npos) {
    r.status = ProbeStatus::kInvalidEdit;
    r.note = "from_token not in input";
    return r;
  }
  std::string edited = x.text;
  edited.replace(at, cf->from_token.size(), cf->to_token);
  if (!is_full_grammar(edited)) {
    r.status = ProbeStatus::kInvalidEdit;
    r.note = "edited input breaks the token grammar";
    r.probe_input = edited;
    return r;
  }
  r.probe_input = std::move(edited);
  score(r, clf);
  return r;
}

bool passes(const ProbeResult& r, double eps) {
  if (r.status != ProbeStatus::kScored) return false;
  switch (r.kind) {
    case ProbeKind::kSufficiency:
      return !r.flipped && score_delta(r.s_orig, *r.s_probe) <= eps;
    case ProbeKind::kNecessity:
      return r.flipped || *r.delta_minus >= eps;
    case ProbeKind::kCounterfactual:
      return r.flipped;
  }
  return false;
}

bool curve_passes(const ProbeResult& r, double eps) {
  if (r.kind == ProbeKind::kSufficiency && r.status == ProbeStatus::kScored) {
    return !r.flipped && *r.score_change >= eps;
  }
  return passes(r, eps);
}

PassCurve pass_curve(std::span<const ProbeResult> results, ProbeKind kind,
                     std::span<const double> epsilons,
                     const BootstrapSettings& bootstrap) {
  std::vector<const ProbeResult*> cases;
  for (const auto& r : results) {
    if (r.kind == kind && r.status != ProbeStatus::kNotApplicable) {
      cases.push_back(&r);
    }
  }
  if (cases.empty()) {
    throw PreconditionError("pass_curve: no applicable " +
                            std::string(to_string(kind)) + " results");
  }
  if (!std::is_sorted(epsilons.begin(), epsilons.end())) {
    throw PreconditionError("pass_curve: epsilon grid must be ascending");
  }
  const std::size_t n = cases.size();
  const std::size_t m = epsilons.size();

  // pass[i][e] for case i at epsilon index e.
  std::vector<std::vector<char>> pass(n, std::vector<char>(m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < m; ++e) {
      pass[i][e] = curve_passes(*cases[i], epsilons[e]);
    }
  }

  PassCurve curve;
  curve.kind = kind;
  curve.cases = n;
  curve.epsilons.assign(epsilons.begin(), epsilons.end());
  for (std::size_t e = 0; e < m; ++e) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) c += pass[i][e];
    curve.pass_rate.push_back(static_cast<double>(c) / static_cast<double>(n));
  }

  std::vector<std::vector<double>> boot(m);
  std::mt19937_64 rng(bootstrap.seed);
  std::vector<std::size_t> counts(m);
  for (std::size_t b = 0; b < bootstrap.resamples; ++b) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& row = pass[rng() % n];
      for (std::size_t e = 0; e < m; ++e) counts[e] += row[e];
    }
    for (std::size_t e = 0; e < m; ++e) {
      boot[e].push_back(static_cast<double>(counts[e]) / static_cast<double>(n));
    }
  }
  for (std::size_t e = 0; e < m; ++e) {
    if (boot[e].empty()) {
      curve.ci_low.push_back(curve.pass_rate[e]);
      curve.ci_high.push_back(curve.pass_rate[e]);
      continue;
    }
    std::sort(boot[e].begin(), boot[e].end());
    curve.ci_low.push_back(nearest_rank<double>(boot[e], 25, 1000));
    curve.ci_high.push_back(nearest_rank<double>(boot[e], 975, 1000));
  }

  if (kind == ProbeKind::kNecessity) {
    std::size_t flips = 0;
    for (const auto* r : cases) flips += r->flipped;
    curve.flip_baseline = static_cast<double>(flips) / static_cast<double>(n);
  }
  return curve;
}

NecessityDecomposition necessity_decomposition(
    std::span<const ProbeResult> results) {
  NecessityDecomposition d;
  struct Acc {
    std::size_t count = 0, flips = 0;
    double sum = 0.0;
  };
  std::array<Acc, 2> cls{};
  std::array<Acc, 3> tok{};
  std::vector<double> deltas;
  Acc all;
  for (const auto& r : results) {
    if (r.kind != ProbeKind::kNecessity || r.status != ProbeStatus::kScored) {
      continue;
    }
    double delta = r.delta_minus.value_or(0.0);
    auto& c = cls[static_cast<std::size_t>(r.y_orig)];
    for (Acc* a : {&c, &all}) {
      ++a->count;
      a->flips += r.flipped;
      a->sum += delta;
    }
    std::size_t removed = r.tokens_removed.value_or(0);
    if (removed >= 1) {
      auto& t = tok[std::min<std::size_t>(removed, 3) - 1];
      ++t.count;
      t.sum += delta;
    }
    deltas.push_back(delta);
  }
  d.count = all.count;
  if (all.count) {
    d.flip_rate = static_cast<double>(all.flips) / static_cast<double>(all.count);
    d.mean_delta = all.sum / static_cast<double>(all.count);
  }
  for (std::size_t l = 0; l < 2; ++l) {
    if (!cls[l].count) continue;
    d.by_class.push_back(
        {static_cast<Label>(l), cls[l].count,
         static_cast<double>(cls[l].flips) / static_cast<double>(cls[l].count),
         cls[l].sum / static_cast<double>(cls[l].count)});
  }
  static constexpr std::array<const char*, 3> kBuckets{"1", "2", "3+"};
  for (std::size_t b = 0; b < 3; ++b) {
    if (!tok[b].count) continue;
    d.by_tokens_removed.push_back(
        {kBuckets[b], tok[b].count,
         tok[b].sum / static_cast<double>(tok[b].count)});
  }
  if (!deltas.empty()) {
    std::sort(deltas.begin(), deltas.end());
    d.delta_quartiles = std::array<double, 3>{
        nearest_rank<double>(deltas, 25, 100),
        nearest_rank<double>(deltas, 50, 100),
        nearest_rank<double>(deltas, 75, 100)};
  }
  return d;
}

std::vector<ProbeResult> run_probes(std::span<const ProbeCase> cases,
                                    const Classifier& clf,
                                    std::size_t parallelism) {
  std::vector<std::array<ProbeResult, 3>> slots(cases.size());
  parallel_for(cases.size(), parallelism, [&](std::size_t i) {
    const auto& c = cases[i];
    AuditRecord rec = c.record;
    rec.frame_id = c.frame_id;
    slots[i] = {sufficiency_probe(c.x, rec, c.original, clf),
                necessity_probe(c.x, rec, c.original, clf),
                counterfactual_probe(c.x, rec, c.original, clf)};
  });
  std::vector<ProbeResult> out;
  out.reserve(3 * cases.size());
  for (auto& s : slots) {
    for (auto& r : s) out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.frame_id, a.kind) < std::tie(b.frame_id, b.kind);
  });
  return out;
}

std::string probe_result_to_json(const ProbeResult& r) {
  nlohmann::ordered_json j;
  j["id"] = r.frame_id;
  j["kind"] = to_string(r.kind);
  j["status"] = to_string(r.status);
  j["y_orig"] = to_string(r.y_orig);
  j["s_orig"] = r.s_orig;
  j["y_probe"] = r.y_probe ? nlohmann::ordered_json(to_string(*r.y_probe))
                           : nlohmann::ordered_json();
  j["s_probe"] = opt_num(r.s_probe);
  j["flipped"] = r.flipped;
  j["delta_minus"] = opt_num(r.delta_minus);
  j["score_change"] = opt_num(r.score_change);
  j["tokens_removed"] = r.tokens_removed
                            ? nlohmann::ordered_json(*r.tokens_removed)
                            : nlohmann::ordered_json();
  j["input"] = r.probe_input;
  j["config_hash"] = r.config_hash;
  if (!r.note.empty()) j["note"] = r.note;
  return j.dump();
}

ProbeResult probe_result_from_json(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (!j.is_object()) throw Error("probe record: not a JSON object");
  ProbeResult r;
  try {
    r.frame_id = j.at("id").get<std::uint64_t>();
    auto kind = parse_probe_kind(j.at("kind").get<std::string>());
    auto status = parse_probe_status(j.at("status").get<std::string>());
    auto y = parse_label(j.at("y_orig").get<std::string>());
    if (!kind || !status || !y) throw Error("probe record: bad enum value");
    r.kind = *kind;
    r.status = *status;
    r.y_orig = *y;
    r.s_orig = j.at("s_orig").get<double>();
    if (!j.at("y_probe").is_null()) {
      r.y_probe = parse_label(j["y_probe"].get<std::string>());
    }
    if (!j.at("s_probe").is_null()) r.s_probe = j["s_probe"].get<double>();
    r.flipped = j.at("flipped").get<bool>();
    if (!j.at("delta_minus").is_null()) {
      r.delta_minus = j["delta_minus"].get<double>();
    }
    if (!j.at("score_change").is_null()) {
      r.score_change = j["score_change"].get<double>();
    }
    if (!j.at("tokens_removed").is_null()) {
      r.tokens_removed = j["tokens_removed"].get<std::size_t>();
    }
    r.probe_input = j.value("input", std::string());
    r.config_hash = j.value("config_hash", std::string());
    r.note = j.value("note", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("probe record: ") + e.what());
  }
  return r;
}

std::string pass_curve_to_csv(const PassCurve& curve) {
  std::string out = "epsilon,pass_rate,ci_low,ci_high\n";
  for (std::size_t e = 0; e < curve.epsilons.size(); ++e) {
    out += format_double(curve.epsilons[e]) + "," +
           format_double(curve.pass_rate[e]) + "," +
           format_double(curve.ci_low[e]) + "," +
           format_double(curve.ci_high[e]) + "\n";
  }
  return out;
}

}  // namespace modtriage
