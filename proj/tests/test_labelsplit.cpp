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

#include <random>

#include "doctest.h"
#include "modtriage/labelsplit.hpp"
#include "support.hpp"

using namespace modtriage;
using modtriage::testing::make_frame;

namespace {

constexpr std::int64_t kS = 1000000;

std::vector<AttackEvent> events_at(std::initializer_list<std::int64_t> secs) {
  std::vector<AttackEvent> out;
  for (auto s : secs) out.push_back({s * kS, "scan", "log.csv"});
  return out;
}

// n frames one second apart, frame id = index.
std::vector<Frame> timeline(std::size_t n, const std::string& source = "f.pcap",
                            std::int64_t offset_s = 0, std::uint64_t first_id = 0) {
  std::vector<Frame> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto f = make_frame((offset_s + static_cast<std::int64_t>(i)) * kS,
                        Direction::kClientToServer, 3, 1, 5 + i % 7,
                        i ? std::optional<std::int64_t>(kS) : std::nullopt, 0, source);
    f.seq_no = i;
    f.frame_id = first_id + i;
    out.push_back(f);
  }
  return out;
}

// Interval-merge oracle over sorted event seconds.
std::vector<std::pair<std::int64_t, std::int64_t>> merge_oracle(
    std::vector<std::int64_t> ts, std::int64_t gap, std::int64_t tail) {
  std::sort(ts.begin(), ts.end());
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  std::int64_t start = 0, last = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (i == 0) {
      start = last = ts[i];
    } else if (ts[i] - last < gap) {
      last = ts[i];
    } else {
      out.emplace_back(start, last + tail);
      start = last = ts[i];
    }
  }
  if (!ts.empty()) out.emplace_back(start, last + tail);
  return out;
}

}  // namespace

TEST_SUITE("labelsplit") {

TEST_CASE("window merging examples") {
  WindowPolicy p{60, 10};
  auto one = build_windows(events_at({0, 30}), p);
  REQUIRE(one.size() == 1);
  CHECK(one[0].start_us == 0);
  CHECK(one[0].end_us == 40 * kS);
  CHECK(one[0].event_count == 2);

  auto two = build_windows(events_at({0, 120}), p);
  REQUIRE(two.size() == 2);
  CHECK(two[0].end_us == 10 * kS);
  CHECK(two[1].start_us == 120 * kS);
  CHECK(two[1].end_us == 130 * kS);

  CHECK(build_windows({}, p).empty());
}

TEST_CASE("window merging against an interval oracle") {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 100; ++round) {
    std::vector<std::int64_t> secs;
    auto n = rng() % 20;
    for (std::size_t i = 0; i < n; ++i) secs.push_back(static_cast<std::int64_t>(rng() % 2000));
    std::sort(secs.begin(), secs.end());
    std::vector<AttackEvent> evs;
    for (auto s : secs) evs.push_back({s * kS, "x", "l"});
    auto w = build_windows(evs, {60, 10});
    auto want = merge_oracle(secs, 60, 10);
    REQUIRE(w.size() == want.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w[i].start_us == want[i].first * kS);
      CHECK(w[i].end_us == want[i].second * kS);
      if (i) CHECK(w[i - 1].end_us < w[i].start_us);
    }
  }
}

TEST_CASE("scenario union") {
  std::vector<AttackEvent> evs{{0, "a", "l"}, {5 * kS, "b", "l"}};
  auto w = build_windows(evs, {60, 10});
  REQUIRE(w.size() == 1);
  CHECK(w[0].scenarios == std::set<std::string>{"a", "b"});
}

TEST_CASE("labels use closed intervals") {
  auto frames = timeline(10);
  auto none = label_frames(frames, {});
  CHECK(std::all_of(none.begin(), none.end(),
                    [](const LabeledFrame& l) { return l.label == Label::kNormal; }));
  std::vector<AttackWindow> w{{4 * kS, 6 * kS, {"x"}, 1}};
  auto labels = label_frames(frames, w);
  std::size_t critical = 0;
  for (const auto& l : labels) {
    if (l.label == Label::kCritical) {
      ++critical;
      CHECK(l.frame_id >= 4);
      CHECK(l.frame_id <= 6);
    }
  }
  CHECK(critical == 3);
}

TEST_CASE("by-time split without windows cuts 60/20/20") {
  auto frames = timeline(100);
  auto labels = label_frames(frames, {});
  SplitPolicy policy;
  auto s = make_split(frames, labels, {}, policy);
  CHECK(s.ids_in(Partition::kTrain).size() == 60);
  CHECK(s.ids_in(Partition::kValidation).size() == 20);
  CHECK(s.ids_in(Partition::kTest).size() == 20);
  CHECK(s.ids_in(Partition::kTrain).back() == 59);
  CHECK_FALSE(s.warnings.empty());  // no critical frames anywhere
  CHECK(verify_no_leakage(s, frames).pass);
}

TEST_CASE("cut snaps past a straddling window") {
  auto frames = timeline(100);
  std::vector<AttackWindow> w{{55 * kS, 65 * kS, {"x"}, 2}};
  auto labels = label_frames(frames, w);
  auto s = make_split(frames, labels, w, SplitPolicy{});
  CHECK(s.ids_in(Partition::kTrain).size() == 66);
  CHECK(s.achieved.train > 0.6);
  CHECK(verify_no_leakage(s, frames).pass);
}

TEST_CASE("by-file split puts one file in each partition") {
  auto frames = timeline(10, "a.pcap", 0, 0);
  for (auto& f : timeline(10, "b.pcap", 100, 10)) frames.push_back(f);
  for (auto& f : timeline(10, "c.pcap", 200, 20)) frames.push_back(f);
  SplitPolicy policy;
  policy.mode = SplitMode::kByFile;
  policy.ratios = {0.34, 0.33, 0.33};
  auto s = make_split(frames, label_frames(frames, {}), {}, policy);
  for (const auto& f : frames) {
    auto p = s.assignment.at(f.frame_id);
    if (f.source_file == "a.pcap") CHECK(p == Partition::kTrain);
    if (f.source_file == "b.pcap") CHECK(p == Partition::kValidation);
    if (f.source_file == "c.pcap") CHECK(p == Partition::kTest);
  }
}

TEST_CASE("impossible split and bad ratios") {
  auto frames = timeline(20);
  std::vector<AttackWindow> w{{0, 19 * kS, {"x"}, 1}};
  CHECK_THROWS_AS(make_split(frames, label_frames(frames, w), w, SplitPolicy{}),
                  SplitError);
  SplitPolicy bad;
  bad.ratios = {0.5, 0.5, 0.1};
  CHECK_THROWS_AS(make_split(frames, label_frames(frames, {}), {}, bad), SplitError);
}

TEST_CASE("split serialization is deterministic and idempotent") {
  auto frames = timeline(50);
  std::vector<AttackWindow> w{{10 * kS, 12 * kS, {"x"}, 1},
                              {40 * kS, 42 * kS, {"y"}, 1}};
  auto labels = label_frames(frames, w);
  auto a = make_split(frames, labels, w, SplitPolicy{});
  auto b = make_split(frames, labels, w, SplitPolicy{});
  CHECK(split_to_csv(a) == split_to_csv(b));
  CHECK(a.id() == b.id());

  auto back = split_from_csv(split_to_csv(a));
  CHECK(back.assignment == a.assignment);
  auto again = make_split(frames, labels, w, back.policy);
  CHECK(split_to_csv(again) == split_to_csv(a));

  auto wj = windows_to_json(w, a.policy.windows);
  CHECK(windows_from_json(wj) == w);
}

TEST_CASE("leakage guard") {
  auto frames = timeline(100);
  std::vector<AttackWindow> w{{30 * kS, 34 * kS, {"x"}, 1},
                              {90 * kS, 92 * kS, {"x"}, 1}};
  auto labels = label_frames(frames, w);
  auto s = make_split(frames, labels, w, SplitPolicy{});
  REQUIRE(verify_no_leakage(s, frames).pass);

  auto leaked = s;
  leaked.assignment[32] = Partition::kTest;
  auto rep = verify_no_leakage(leaked, frames);
  CHECK_FALSE(rep.pass);
  CHECK_FALSE(rep.violations.empty());

  std::vector<Frame> train;
  for (const auto& f : frames) {
    if (s.assignment.at(f.frame_id) == Partition::kTrain) train.push_back(f);
  }
  FitOptions opts;
  opts.allow_degenerate = true;
  auto fit = fit_bins_on_train(train, s, opts);
  CHECK(fit.bins.fit_split_id == s.id());
  CHECK(verify_no_leakage(s, frames, &fit.bins).pass);

  auto foreign = fit.bins;
  foreign.fit_split_id = "other";
  CHECK_FALSE(verify_no_leakage(s, frames, &foreign).pass);

  auto with_test = train;
  with_test.push_back(frames.back());
  CHECK_THROWS_AS(fit_bins_on_train(with_test, s, opts), LeakageError);
}

}  // TEST_SUITE
