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

// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "modtriage/audit.hpp"
#include "modtriage/classify.hpp"
#include "modtriage/encode.hpp"
#include "modtriage/labelsplit.hpp"
#include "modtriage/pipeline.hpp"
#include "modtriage/probes.hpp"
#include "modtriage/report.hpp"
#include "support.hpp"

using namespace modtriage;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Thrown by expect() to fail the current criterion with a reason.
struct Failure {
  std::string why;
};

void expect(bool ok, const std::string& why) {
  if (!ok) throw Failure{why};
}

void expect_within(Clock::time_point start, double limit_s) {
  double s = std::chrono::duration<double>(Clock::now() - start).count();
  expect(s < limit_s, "took " + std::to_string(s) + " s, limit " + std::to_string(limit_s));
}

int failures = 0;

void criterion(int n, const std::string& name, const std::function<std::string()>& body) {
  std::string detail;
  bool ok = false;
  try {
    detail = body();
    ok = true;
  } catch (const Failure& f) {
    detail = f.why;
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  if (!ok) ++failures;
  std::printf("%s  %2d  %s: %s\n", ok ? "PASS" : "FAIL", n, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::int64_t nearest_rank_oracle(std::vector<std::int64_t> v, std::size_t pct) {
  std::sort(v.begin(), v.end());
  std::size_t r = (v.size() * pct + 99) / 100;
  return v[std::max<std::size_t>(r, 1) - 1];
}

double macro_f1_at(const std::vector<ScoredExample>& v, double tau) {
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& e : v) {
    bool pred = e.score >= tau;
    bool crit = e.label == Label::kCritical;
    (pred ? (crit ? tp : fp) : (crit ? fn : tn)) += 1;
  }
  double f1c = 2 * tp + fp + fn > 0 ? 2 * tp / (2 * tp + fp + fn) : 0;
  double f1n = 2 * tn + fn + fp > 0 ? 2 * tn / (2 * tn + fn + fp) : 0;
  return (f1c + f1n) / 2;
}

std::vector<Frame> timeline(std::size_t n) {
  std::vector<Frame> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto f = modtriage::testing::make_frame(static_cast<std::int64_t>(i) * 1000000,
                                            Direction::kClientToServer, 3, 1,
                                            static_cast<std::uint32_t>(5 + i % 9),
                                            i ? std::optional<std::int64_t>(1000000 + i)
                                              : std::nullopt,
                                            0);
    f.seq_no = i;
    f.frame_id = i;
    out.push_back(f);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Synthetic token strings with every field drawn at random.
std::vector<TokenString> random_token_strings(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto bins = modtriage::testing::fixture_bins();
  const int fcs[] = {1, 2, 3, 4, 5, 6, 8, 15, 16, 43, 90, 129, 131, 134};
  std::vector<TokenString> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto f = modtriage::testing::make_frame(
        0, rng() % 2 ? Direction::kClientToServer : Direction::kServerToClient,
        fcs[rng() % std::size(fcs)], static_cast<int>(1 + rng() % 4),
        static_cast<std::uint32_t>(rng() % 60), static_cast<std::int64_t>(rng() % 90000),
        rng() % 3 == 0 ? static_cast<int>(1 + rng() % 4) : 0);
    out.push_back(encode_token_string(f, bins));
  }
  return out;
}

}  // namespace

int main() {
  criterion(1, "token encoding golden string", [] {
    auto start = Clock::now();
    auto f = modtriage::testing::make_frame(0, Direction::kClientToServer, 3, 1, 14, 87000, 0);
    auto text = encode_token_string(f, modtriage::testing::fixture_bins()).text;
    const std::string want = "DIR:C2S FC:03 UNIT:U1 LEN:B2 IAT:B4 EX:0";
    expect(text == want, "got '" + text + "'");
    expect_within(start, 1.0);
    return "'" + text + "'";
  });

  criterion(2, "bin fitting matches nearest-rank oracle", [] {
    auto start = Clock::now();
    std::mt19937_64 rng(101);
    std::size_t ties = 0;
    for (int round = 0; round < 50; ++round) {
      std::size_t n = 1 + rng() % 200;
      std::int64_t range = round % 2 ? 10 : 100000;  // small ranges force ties
      std::vector<std::int64_t> lens, iats;
      std::vector<Frame> frames;
      for (std::size_t i = 0; i < n; ++i) {
        lens.push_back(static_cast<std::int64_t>(rng() % range));
        iats.push_back(static_cast<std::int64_t>(rng() % (range * 10)));
        frames.push_back(modtriage::testing::make_frame(
            static_cast<std::int64_t>(i), Direction::kClientToServer, 3, 1,
            static_cast<std::uint32_t>(lens.back()), iats.back(), 0));
      }
      FitOptions opts;
      opts.allow_degenerate = true;
      auto bins = fit_bins(frames, opts).bins;
      std::vector<std::int64_t> want_len, want_iat;
      for (auto p : kLenPercentiles) want_len.push_back(nearest_rank_oracle(lens, p));
      for (auto p : kIatPercentiles) want_iat.push_back(nearest_rank_oracle(iats, p));
      expect(bins.len_edges == want_len, "LEN edges differ in round " + std::to_string(round));
      expect(bins.iat_edges == want_iat, "IAT edges differ in round " + std::to_string(round));
      // A value equal to an edge lands in the lower bucket.
      for (auto v : lens) {
        int lower = static_cast<int>(std::count_if(want_len.begin(), want_len.end(),
                                                   [v](std::int64_t e) { return e < v; }));
        expect(bucketize(static_cast<double>(v), bins.len_edges) == lower,
               "bucket mismatch for value " + std::to_string(v));
        ties += std::find(want_len.begin(), want_len.end(), v) != want_len.end();
      }
    }
    expect(ties > 0, "no value hit an edge");
    expect_within(start, 5.0);
    return "50 multisets exact, " + std::to_string(ties) + " edge ties";
  });

  criterion(3, "leakage guard", [] {
    auto frames = timeline(100);
    std::vector<AttackWindow> windows{{20000000, 24000000, {"x"}, 1},
                                      {88000000, 90000000, {"x"}, 1}};
    auto split = make_split(frames, label_frames(frames, windows), windows, SplitPolicy{});
    expect(verify_no_leakage(split, frames).pass, "clean split reported as leaking");
    auto leaked = split;
    leaked.assignment[22] = Partition::kTest;  // window 0 now spans train and test
    auto report = verify_no_leakage(leaked, frames);
    expect(!report.pass, "straddling window not detected");
    std::vector<Frame> train;
    for (const auto& f : frames) {
      if (split.assignment.at(f.frame_id) == Partition::kTrain) train.push_back(f);
    }
    train.push_back(frames.back());  // a test frame
    bool refused = false;
    try {
      fit_bins_on_train(train, split, {});
    } catch (const LeakageError&) {
      refused = true;
    }
    expect(refused, "fit-bins accepted a test frame");
    return "straddle flagged (" + std::to_string(report.violations.size()) +
           " violation), non-train fit refused";
  });

  criterion(4, "threshold sweep matches exhaustive enumeration", [] {
    auto start = Clock::now();
    std::mt19937_64 rng(202);
    for (int round = 0; round < 100; ++round) {
      std::size_t n = 2 + rng() % 49;
      std::vector<ScoredExample> v;
      for (std::size_t i = 0; i < n; ++i) {
        Label l = i == 0 ? Label::kNormal : i == 1 ? Label::kCritical
                         : (rng() % 2 ? Label::kCritical : Label::kNormal);
        double s = round % 3 ? static_cast<double>(rng() % 1000001) / 1e6
                             : static_cast<double>(rng() % 10) / 10;
        v.push_back({s, l});
      }
      std::vector<double> scores;
      for (const auto& e : v) scores.push_back(e.score);
      std::sort(scores.begin(), scores.end());
      scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
      std::vector<double> cands{0.0, 1.0};
      for (std::size_t i = 1; i < scores.size(); ++i) {
        cands.push_back((scores[i - 1] + scores[i]) / 2);
      }
      double best = 0;
      for (double c : cands) best = std::max(best, macro_f1_at(v, c));
      auto sweep = sweep_threshold(v);
      double got = macro_f1_at(v, sweep.tau);
      expect(std::abs(got - best) <= 1e-12,
             "round " + std::to_string(round) + ": " + fmt(got) + " vs " + fmt(best));
      expect(std::abs(sweep.macro_f1 - best) <= 1e-12, "reported macro-F1 differs");
    }
    expect_within(start, 10.0);
    return "100 score sets within 1e-12";
  });

  criterion(5, "metric identities", [] {
    std::mt19937_64 rng(303);
    for (int round = 0; round < 1000; ++round) {
      Confusion c{rng() % 60, rng() % 60, rng() % 60, rng() % 60};
      if (c.total() == 0) c.tn = 1;
      std::vector<KeyedLabel> pred, gold;
      std::uint64_t id = 0;
      auto add = [&](std::size_t k, Label p, Label g) {
        for (std::size_t i = 0; i < k; ++i, ++id) {
          pred.emplace_back(id, p);
          gold.emplace_back(id, g);
        }
      };
      add(c.tp, Label::kCritical, Label::kCritical);
      add(c.fp, Label::kCritical, Label::kNormal);
      add(c.fn, Label::kNormal, Label::kCritical);
      add(c.tn, Label::kNormal, Label::kNormal);
      std::shuffle(pred.begin(), pred.end(), rng);
      auto m = compute_metrics(pred, gold);
      expect(m.confusion == c, "confusion mismatch");
      double total = static_cast<double>(c.total());
      expect(std::abs(m.accuracy - static_cast<double>(c.tp + c.tn) / total) <= 1e-12,
             "accuracy identity");
      if (c.tp + c.fn > 0) {
        expect(std::abs(m.recall_critical -
                        static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)) <= 1e-12,
               "recall identity");
      }
      expect(std::abs(m.macro_f1 - (m.f1_critical + m.f1_normal) / 2) <= 1e-12,
             "macro-F1 identity");
      for (double r : {m.accuracy, m.macro_f1, m.recall_critical, m.f1_critical}) {
        expect(r >= 0 && r <= 1, "rate outside [0,1]");
      }
    }
    return "1000 confusions within 1e-12";
  });

  std::vector<ProbeResult> self_test_results;
  criterion(6, "probe harness self-test on the rule back end", [&self_test_results] {
    auto start = Clock::now();
    RuleClassifier clf;
    const auto& rules = clf.rules();
    auto xs = random_token_strings(600, 404);
    std::size_t crit = 0, suff_pass = 0, nec_flip = 0;
    std::size_t partial = 0, single = 0, single_flip = 0, nonclear = 0, nonclear_flip = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto& x = xs[i];
      auto orig = classify(clf, x.text);
      auto rec = rule_audit(x, orig.label, rules);
      auto toks = *parse_fragment(x.text);
      auto fired = rules.triggers(toks);
      if (orig.label == Label::kCritical) {
        ++crit;
        auto s = sufficiency_probe(x, rec, orig, clf);
        auto n = necessity_probe(x, rec, orig, clf);
        suff_pass += passes(s, 0.0);
        nec_flip += n.flipped;
        s.frame_id = n.frame_id = i;
        self_test_results.push_back(s);
        self_test_results.push_back(n);

        // Drop all but the last trigger: one rule step per removed trigger.
        if (fired.size() >= 2) {
          AuditRecord sub = rec;
          sub.evidence.assign(rec.evidence.begin(), rec.evidence.end() - 1);
          auto p = necessity_probe(x, sub, orig, clf);
          double want = score_delta(0.1 * static_cast<double>(sub.evidence.size()), 0.0);
          expect(!p.flipped, "partial removal flipped: " + x.text);
          expect(p.delta_minus == want, "partial delta " + fmt(p.delta_minus.value_or(-1)) +
                                            " for " + x.text);
          ++partial;
        }
        if (fired.size() == 1) {
          expect(rec.counterfactual.has_value(), "no clearing edit for " + x.text);
          auto cf = counterfactual_probe(x, rec, orig, clf);
          ++single;
          single_flip += cf.flipped;
          cf.frame_id = i;
          self_test_results.push_back(cf);

          // Non-clearing edit: change a token that triggers nothing.
          AuditRecord keep = rec;
          const auto& len = x.tokens[static_cast<std::size_t>(Field::kLen)];
          keep.counterfactual = Counterfactual{len, len == "LEN:B1" ? "LEN:B2" : "LEN:B1"};
          auto nc = counterfactual_probe(x, keep, orig, clf);
          expect(nc.status == ProbeStatus::kScored, "non-clearing edit not scored");
          ++nonclear;
          nonclear_flip += nc.flipped;
        }
      }
    }
    expect(xs.size() >= 500, "fewer than 500 frames");
    expect(crit > 0 && suff_pass == crit,
           "sufficiency " + std::to_string(suff_pass) + "/" + std::to_string(crit));
    expect(nec_flip == crit, "necessity flips " + std::to_string(nec_flip) + "/" +
                                 std::to_string(crit));
    expect(partial > 0, "no multi-trigger frames");
    expect(single > 0 && single_flip == single,
           "clearing edits " + std::to_string(single_flip) + "/" + std::to_string(single));
    expect(nonclear_flip == 0, "non-clearing edits flipped " + std::to_string(nonclear_flip));
    expect_within(start, 30.0);
    return std::to_string(xs.size()) + " frames, " + std::to_string(crit) +
           " critical: sufficiency 100%, necessity flips 100%, " + std::to_string(partial) +
           " partial removals exact, clearing edits " + std::to_string(single_flip) + "/" +
           std::to_string(single) + ", non-clearing 0/" + std::to_string(nonclear);
  });

  criterion(7, "pass curves nonincreasing, bootstrap deterministic", [&self_test_results] {
    // Mix the self-test results with random ones so the curves have shape.
    auto rs = self_test_results;
    std::mt19937_64 rng(505);
    for (std::uint64_t i = 0; i < 300; ++i) {
      ProbeResult r;
      r.frame_id = 100000 + i;
      r.kind = i % 2 ? ProbeKind::kSufficiency : ProbeKind::kNecessity;
      r.y_orig = Label::kCritical;
      r.s_orig = 0.5 + static_cast<double>(rng() % 50) / 100;
      r.s_probe = static_cast<double>(rng() % 100) / 100;
      r.flipped = rng() % 5 == 0;
      r.y_probe = r.flipped ? Label::kNormal : Label::kCritical;
      r.score_change = score_delta(*r.s_probe, r.s_orig);
      if (r.kind == ProbeKind::kNecessity) {
        r.delta_minus = std::max(0.0, score_delta(r.s_orig, *r.s_probe));
      }
      rs.push_back(r);
    }
    const auto& eps = default_epsilons();
    BootstrapSettings bs;
    for (auto kind : {ProbeKind::kSufficiency, ProbeKind::kNecessity}) {
      auto a = pass_curve(rs, kind, eps, bs);
      auto b = pass_curve(rs, kind, eps, bs);
      expect(std::is_sorted(a.pass_rate.rbegin(), a.pass_rate.rend()),
             std::string(to_string(kind)) + " curve increases");
      expect(a.ci_low == b.ci_low && a.ci_high == b.ci_high,
             std::string(to_string(kind)) + " CIs differ between runs");
      for (std::size_t e = 0; e < eps.size(); ++e) {
        expect(a.ci_low[e] >= 0 && a.ci_high[e] <= 1 && a.ci_low[e] <= a.ci_high[e],
               "CI out of range");
      }
    }
    return std::to_string(eps.size()) + "-point grid, " + std::to_string(bs.resamples) +
           " resamples, seed " + std::to_string(bs.seed);
  });

  criterion(8, "cost model range", [] {
    auto r = cost_range_per_1k(100, 17, PriceTable{2.50, 10.00}, OverheadRange{0, 400});
    double low = std::round(r.low * 100) / 100;
    double high = std::round(r.high * 100) / 100;
    expect(low == 0.42 && high == 1.42, "got $" + fmt(r.low) + "-$" + fmt(r.high));
    return "$" + fmt(r.low).substr(0, 4) + "-$" + fmt(r.high).substr(0, 4) + " per 1k";
  });

  criterion(9, "Tukey filter property", [] {
    std::mt19937_64 rng(606);
    std::size_t removed = 0;
    for (int round = 0; round < 100; ++round) {
      std::size_t n = 4 + rng() % 200;
      std::vector<double> v;
      std::lognormal_distribution<double> body(-0.3, 0.4);
      for (std::size_t i = 0; i < n; ++i) {
        v.push_back(rng() % 25 == 0 ? 5 + static_cast<double>(rng() % 100) : body(rng));
      }
      auto sorted = v;
      std::sort(sorted.begin(), sorted.end());
      double q1 = sorted[(n * 25 + 99) / 100 - 1];
      double q3 = sorted[(n * 75 + 99) / 100 - 1];
      double lo = q1 - 1.5 * (q3 - q1), hi = q3 + 1.5 * (q3 - q1);
      std::vector<double> want;
      for (double x : v) {
        if (x >= lo && x <= hi) want.push_back(x);
      }
      auto f = tukey_fences(v);
      expect(f.low == lo && f.high == hi, "fences differ in round " + std::to_string(round));
      auto kept = tukey_filter(v, f);
      expect(kept == want, "filter differs in round " + std::to_string(round));
      expect(tukey_filter(kept, f) == kept, "filter not idempotent");
      removed += v.size() - kept.size();
    }
    return "100 lists exact, " + std::to_string(removed) + " points removed";
  });

  criterion(10, "record validity fixture", [] {
    auto rules = RuleSet::defaults();
    auto xs = random_token_strings(200, 707);
    std::vector<LabeledValidity> recs;
    std::size_t crit = 0;
    for (const auto& x : xs) {
      if (recs.size() == 8) break;
      auto y = rule_classify(x.text, rules).label;
      auto v = validate_record(x, rule_audit(x, y, rules), rules);
      expect(v == RecordValidity{}, "rule audit record invalid for " + x.text);
      recs.push_back({y, v});
      crit += y == Label::kCritical;
    }
    auto x = *parse_token_string("DIR:S2C FC:129 UNIT:U1 LEN:B1 IAT:B2 EX:1");
    AuditRecord fabricated = rule_audit(x, Label::kCritical, rules);
    fabricated.evidence.push_back("FC:999");
    recs.push_back({Label::kCritical, validate_record(x, fabricated, rules)});
    AuditRecord unexplained;
    unexplained.label_explained = Label::kCritical;
    unexplained.evidence = {"UNIT:U1"};
    recs.push_back({Label::kCritical, validate_record(x, unexplained, rules)});
    crit += 2;

    auto s = validity_rates(recs);
    expect(recs.size() == 10, "fixture size");
    expect(s.spans_valid.count == 9 && s.spans_valid.rate == 0.9,
           "spans_valid " + std::to_string(s.spans_valid.count) + "/10");
    expect(s.unexplained_critical.count == 1 && s.unexplained_critical.total == crit,
           "unexplained " + std::to_string(s.unexplained_critical.count) + "/" +
               std::to_string(s.unexplained_critical.total));
    return "spans_valid 90%, unexplained critical 1 of " + std::to_string(crit);
  });

  criterion(11, "end-to-end determinism on the synthetic capture", [] {
    auto cfg = load_run_config("configs/synthetic_rule.json");
    cfg.backend = Backend::kRule;
    cfg.out_dir = modtriage::testing::temp_dir("acceptance_e2e");
    const char* bundle[] = {"report.json", "metrics.csv", "summary.txt"};
    std::vector<std::string> first;
    for (int run = 0; run < 2; ++run) {
      fs::remove_all(cfg.run_dir());
      run_all(cfg);
      for (std::size_t i = 0; i < std::size(bundle); ++i) {
        auto body = read_file(cfg.run_dir() / bundle[i]);
        if (run == 0) {
          first.push_back(body);
        } else {
          expect(body == first[i], std::string(bundle[i]) + " differs between runs");
        }
      }
    }
    return "report bundle sha256 " + sha256_hex(first[0] + first[1] + first[2]).substr(0, 16);
  });

  criterion(12, "mocked LLM transport contract", [] {
    PromptConfig cfg;
    cfg.system_text = "Classify.";
    const std::string x = "DIR:C2S FC:03 UNIT:U1 LEN:B2 IAT:B4 EX:0";
    const std::string good = R"({"label":"critical","confidence":0.8,"rationale":"r"})";

    modtriage::testing::ScriptedTransport retry({R"({"confidence":0.8,"rationale":"r"})", good});
    auto p = llm_classify(x, cfg, retry);
    expect(p.attempts == 2 && p.label == Label::kCritical, "malformed-then-valid");

    modtriage::testing::ScriptedTransport bad({"nope", "{}", "[]"});
    bool exhausted = false;
    try {
      llm_classify(x, cfg, bad);
    } catch (const ClassifyError& e) {
      exhausted = e.kind() == ClassifyError::Kind::kMalformedResponseExhausted;
    }
    expect(exhausted, "three malformed replies did not exhaust the budget");

    modtriage::testing::ScriptedTransport sure(
        {R"({"label":"normal","confidence":0.99,"rationale":"r"})"});
    auto q = llm_classify(x, cfg, sure);
    expect(q.label == Label::kNormal, "label inferred from confidence");
    return "attempts=2 on retry, exhaustion after 3, normal@0.99 stays normal";
  });

  std::printf("%d of 12 criteria failed\n", failures);
  return failures;
}
