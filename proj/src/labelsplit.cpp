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

#include "modtriage/labelsplit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "modtriage/util.hpp"

namespace modtriage {

namespace {

std::int64_t seconds_to_us(double s) {
  return static_cast<std::int64_t>(std::llround(s * 1e6));
}

nlohmann::ordered_json window_policy_json(const WindowPolicy& p) {
  nlohmann::ordered_json j;
  j["merge_gap_s"] = p.merge_gap_s;
  j["tail_s"] = p.tail_s;
  return j;
}

nlohmann::ordered_json split_policy_json(const SplitPolicy& p) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(p.mode);
  j["ratios"] = {{"train", p.ratios.train},
                 {"validation", p.ratios.validation},
                 {"test", p.ratios.test}};
  j["windows"] = window_policy_json(p.windows);
  return j;
}

std::string assignment_rows(const Split& split) {
  std::string rows;
  for (const auto& [id, part] : split.assignment) {
    rows += std::to_string(id);
    rows += ',';
    rows += to_string(part);
    rows += '\n';
  }
  return rows;
}

}  // namespace

std::vector<AttackWindow> build_windows(std::span<const AttackEvent> events,
                                        const WindowPolicy& policy) {
  if (policy.merge_gap_s < 0 || policy.tail_s < 0) {
    throw PreconditionError("build_windows: gap and tail must be >= 0");
  }
  std::vector<AttackEvent> sorted(events.begin(), events.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) {
                     return a.timestamp_us < b.timestamp_us;
                   });
  const std::int64_t gap = seconds_to_us(policy.merge_gap_s);
  const std::int64_t tail = seconds_to_us(policy.tail_s);

  std::vector<AttackWindow> out;
  std::int64_t last_event = 0;
  for (const auto& ev : sorted) {
    bool merge = !out.empty() && (ev.timestamp_us - last_event < gap ||
                                  ev.timestamp_us <= out.back().end_us);
    if (!merge) {
      out.push_back(AttackWindow{ev.timestamp_us, ev.timestamp_us, {}, 0});
    }
    auto& w = out.back();
    w.end_us = std::max(w.end_us, ev.timestamp_us + tail);
    w.scenarios.insert(ev.scenario);
    ++w.event_count;
    last_event = ev.timestamp_us;
  }
  return out;
}

std::optional<std::size_t> find_window(std::span<const AttackWindow> windows,
                                       std::int64_t t) {
  auto it = std::partition_point(
      windows.begin(), windows.end(),
      [t](const AttackWindow& w) { return w.end_us < t; });
  if (it != windows.end() && it->contains(t)) {
    return static_cast<std::size_t>(it - windows.begin());
  }
  return std::nullopt;
}

std::vector<LabeledFrame> label_frames(std::span<const Frame> frames,
                                       std::span<const AttackWindow> windows) {
  std::vector<LabeledFrame> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    out.push_back({f.frame_id, find_window(windows, f.timestamp_us)
                                   ? Label::kCritical
                                   : Label::kNormal});
  }
  return out;
}

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kValidation: return "validation";
    case Partition::kTest: return "test";
  }
  return "?";
}

std::optional<Partition> parse_partition(std::string_view s) {
  if (s == "train") return Partition::kTrain;
  if (s == "validation") return Partition::kValidation;
  if (s == "test") return Partition::kTest;
  return std::nullopt;
}

std::string_view to_string(SplitMode m) {
  return m == SplitMode::kByFile ? "by_file" : "by_time";
}

std::optional<SplitMode> parse_split_mode(std::string_view s) {
  if (s == "by_file") return SplitMode::kByFile;
  if (s == "by_time") return SplitMode::kByTime;
  return std::nullopt;
}

std::string Split::id() const {
  return sha256_hex(split_policy_json(policy).dump() + "\n" +
                    assignment_rows(*this));
}

std::vector<std::uint64_t> Split::ids_in(Partition p) const {
  std::vector<std::uint64_t> out;
  for (const auto& [id, part] : assignment) {
    if (part == p) out.push_back(id);
  }
  return out;
}

Split make_split(std::span<const Frame> frames,
                 std::span<const LabeledFrame> labels,
                 std::span<const AttackWindow> windows,
                 const SplitPolicy& policy) {
  const auto& r = policy.ratios;
  if (r.train <= 0 || r.validation <= 0 || r.test <= 0 ||
      std::abs(r.train + r.validation + r.test - 1.0) > 1e-9) {
    throw SplitError("make_split: ratios must be positive and sum to 1");
  }
  if (frames.empty()) throw SplitError("make_split: no frames");

  // Order frames into indivisible units: equal-timestamp groups or files.
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> unit_of(frames.size());
  std::size_t unit_count = 0;
  if (policy.mode == SplitMode::kByTime) {
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      const auto& fa = frames[a];
      const auto& fb = frames[b];
      return std::tie(fa.timestamp_us, fa.source_file, fa.seq_no) <
             std::tie(fb.timestamp_us, fb.source_file, fb.seq_no);
    });
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k > 0 && frames[order[k]].timestamp_us !=
                       frames[order[k - 1]].timestamp_us) {
        ++unit_count;
      }
      unit_of[order[k]] = unit_count;
    }
    ++unit_count;
  } else {
    std::map<std::string, std::int64_t> first_ts;
    for (const auto& f : frames) {
      auto [it, inserted] = first_ts.emplace(f.source_file, f.timestamp_us);
      if (!inserted) it->second = std::min(it->second, f.timestamp_us);
    }
    std::vector<std::pair<std::int64_t, std::string>> files;
    for (const auto& [name, ts] : first_ts) files.emplace_back(ts, name);
    std::sort(files.begin(), files.end());
    std::map<std::string, std::size_t> file_unit;
    for (std::size_t u = 0; u < files.size(); ++u) {
      file_unit[files[u].second] = u;
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
      unit_of[i] = file_unit[frames[i].source_file];
    }
    unit_count = files.size();
  }

  std::vector<std::size_t> cum(unit_count + 1, 0);
  for (std::size_t i = 0; i < frames.size(); ++i) ++cum[unit_of[i] + 1];
  for (std::size_t u = 0; u < unit_count; ++u) cum[u + 1] += cum[u];

  // Unit span of each window that holds frames.
  std::vector<std::pair<std::size_t, std::size_t>> spans(
      windows.size(), {SIZE_MAX, 0});
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (auto w = find_window(windows, frames[i].timestamp_us)) {
      auto& s = spans[*w];
      s.first = std::min(s.first, unit_of[i]);
      s.second = std::max(s.second, unit_of[i]);
    }
  }

  const double n = static_cast<double>(frames.size());
  auto nearest_boundary = [&](double target, std::size_t lo) {
    std::size_t best = lo;
    for (std::size_t b = lo; b <= unit_count; ++b) {
      if (std::abs(static_cast<double>(cum[b]) - target) <
          std::abs(static_cast<double>(cum[best]) - target)) {
        best = b;
      }
    }
    return best;
  };
  auto snap = [&](std::size_t cut) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (const auto& [lo, hi] : spans) {
        if (lo != SIZE_MAX && lo < cut && cut <= hi) {
          cut = hi + 1;
          moved = true;
        }
      }
    }
    return cut;
  };

  std::size_t c1 = snap(nearest_boundary(r.train * n, 1));
  std::size_t c2 = snap(nearest_boundary((r.train + r.validation) * n, c1 + 1));
  if (c1 >= unit_count || c2 >= unit_count || c2 <= c1) {
    std::string diag = "make_split: impossible assignment with " +
                       std::to_string(unit_count) + " " +
                       (policy.mode == SplitMode::kByFile ? "files" : "time units");
    for (std::size_t w = 0; w < spans.size(); ++w) {
      if (spans[w].first == SIZE_MAX) continue;
      if (spans[w].second - spans[w].first + 1 >= unit_count - 1) {
        diag += "; window [" + std::to_string(windows[w].start_us) + ", " +
                std::to_string(windows[w].end_us) + "] covers " +
                std::to_string(spans[w].second - spans[w].first + 1) + " units";
      }
    }
    throw SplitError(diag);
  }

  Split split;
  split.policy = policy;
  split.window_manifest.assign(windows.begin(), windows.end());
  std::array<std::size_t, 3> counts{};
  for (std::size_t i = 0; i < frames.size(); ++i) {
    Partition p = unit_of[i] < c1   ? Partition::kTrain
                  : unit_of[i] < c2 ? Partition::kValidation
                                    : Partition::kTest;
    if (!split.assignment.emplace(frames[i].frame_id, p).second) {
      throw SplitError("make_split: duplicate frame id " +
                       std::to_string(frames[i].frame_id));
    }
    ++counts[static_cast<std::size_t>(p)];
  }
  split.achieved = {counts[0] / n, counts[1] / n, counts[2] / n};

  std::map<std::uint64_t, Label> label_of;
  for (const auto& l : labels) label_of[l.frame_id] = l.label;
  std::array<std::array<std::size_t, 2>, 3> class_counts{};
  for (const auto& [id, part] : split.assignment) {
    auto it = label_of.find(id);
    if (it == label_of.end()) continue;
    ++class_counts[static_cast<std::size_t>(part)]
                  [static_cast<std::size_t>(it->second)];
  }
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t c = 0; c < 2; ++c) {
      if (class_counts[p][c] == 0) {
        split.warnings.push_back(
            "make_split: partition " +
            std::string(to_string(static_cast<Partition>(p))) + " has no " +
            std::string(to_string(static_cast<Label>(c))) + " frames");
      }
    }
  }
  return split;
}

LeakageReport verify_no_leakage(const Split& split,
                                std::span<const Frame> frames,
                                const BinBoundaries* bins) {
  LeakageReport report;
  auto fail = [&](std::string msg) {
    report.pass = false;
    report.violations.push_back(std::move(msg));
  };

  std::set<std::uint64_t> seen;
  for (const auto& f : frames) {
    if (!seen.insert(f.frame_id).second) {
      fail("frame " + std::to_string(f.frame_id) + " listed more than once");
    }
    if (!split.assignment.count(f.frame_id)) {
      fail("frame " + std::to_string(f.frame_id) + " has no partition");
    }
  }
  for (const auto& [id, part] : split.assignment) {
    if (!seen.count(id)) {
      fail("assignment references unknown frame " + std::to_string(id));
    }
  }

  const auto& windows = split.window_manifest;
  std::vector<std::set<Partition>> parts(windows.size());
  for (const auto& f : frames) {
    auto w = find_window(windows, f.timestamp_us);
    auto it = split.assignment.find(f.frame_id);
    if (w && it != split.assignment.end()) parts[*w].insert(it->second);
  }
  for (std::size_t w = 0; w < windows.size(); ++w) {
    if (parts[w].size() <= 1) continue;
    std::string names;
    for (auto p : parts[w]) {
      if (!names.empty()) names += ",";
      names += to_string(p);
    }
    fail("window " + std::to_string(w) + " [" +
         std::to_string(windows[w].start_us) + ", " +
         std::to_string(windows[w].end_us) + "] spans partitions " + names);
  }

  if (bins && bins->fit_split_id != split.id()) {
    fail("bins fitted on split '" + bins->fit_split_id +
         "' but current split is '" + split.id() + "'");
  }
  return report;
}

FitResult fit_bins_on_train(std::span<const Frame> train_frames,
                            const Split& split, FitOptions options) {
  std::vector<std::uint64_t> bad;
  for (const auto& f : train_frames) {
    auto it = split.assignment.find(f.frame_id);
    if (it == split.assignment.end() || it->second != Partition::kTrain) {
      bad.push_back(f.frame_id);
    }
  }
  if (!bad.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < bad.size() && i < 10; ++i) {
      if (i) ids += ",";
      ids += std::to_string(bad[i]);
    }
    throw LeakageError("fit-bins: refusing " + std::to_string(bad.size()) +
                       " frame(s) not tagged train (ids " + ids +
                       (bad.size() > 10 ? ",..." : "") + ")");
  }
  options.fit_split_id = split.id();
  return fit_bins(train_frames, options);
}

std::string windows_to_json(std::span<const AttackWindow> windows,
                            const WindowPolicy& policy) {
  nlohmann::ordered_json j;
  j["policy"] = window_policy_json(policy);
  j["windows"] = nlohmann::ordered_json::array();
  for (const auto& w : windows) {
    nlohmann::ordered_json o;
    o["start_us"] = w.start_us;
    o["end_us"] = w.end_us;
    o["scenarios"] = w.scenarios;
    o["event_count"] = w.event_count;
    j["windows"].push_back(std::move(o));
  }
  return j.dump(2) + "\n";
}

std::vector<AttackWindow> windows_from_json(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (!j.is_object() || !j.contains("windows")) {
    throw SplitError("windows.json: missing windows array");
  }
  std::vector<AttackWindow> out;
  for (const auto& o : j["windows"]) {
    AttackWindow w;
    w.start_us = o.at("start_us").get<std::int64_t>();
    w.end_us = o.at("end_us").get<std::int64_t>();
    w.scenarios = o.at("scenarios").get<std::set<std::string>>();
    w.event_count = o.value("event_count", std::size_t{0});
    out.push_back(std::move(w));
  }
  return out;
}

std::string policy_to_json(const SplitPolicy& policy) {
  return split_policy_json(policy).dump();
}

SplitPolicy policy_from_json(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (!j.is_object()) throw SplitError("split policy: not a JSON object");
  SplitPolicy p;
  auto mode = parse_split_mode(j.value("mode", std::string("by_time")));
  if (!mode) throw SplitError("split policy: unknown mode");
  p.mode = *mode;
  if (j.contains("ratios")) {
    const auto& r = j["ratios"];
    p.ratios.train = r.value("train", p.ratios.train);
    p.ratios.validation = r.value("validation", p.ratios.validation);
    p.ratios.test = r.value("test", p.ratios.test);
  }
  if (j.contains("windows")) {
    const auto& w = j["windows"];
    p.windows.merge_gap_s = w.value("merge_gap_s", p.windows.merge_gap_s);
    p.windows.tail_s = w.value("tail_s", p.windows.tail_s);
  }
  return p;
}

std::string split_to_csv(const Split& split) {
  nlohmann::ordered_json achieved = {{"train", split.achieved.train},
                                     {"validation", split.achieved.validation},
                                     {"test", split.achieved.test}};
  std::string out = "# policy: " + policy_to_json(split.policy) + "\n";
  out += "# achieved: " + achieved.dump() + "\n";
  out += "# split_id: " + split.id() + "\n";
  out += "frame_id,partition\n";
  out += assignment_rows(split);
  return out;
}

Split split_from_csv(std::string_view text) {
  Split split;
  bool header = false;
  for (auto raw : modtriage::split(text, '\n')) {
    auto line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto body = trim(line.substr(1));
      constexpr std::string_view kPolicy = "policy:";
      constexpr std::string_view kAchieved = "achieved:";
      if (body.substr(0, kPolicy.size()) == kPolicy) {
        split.policy = policy_from_json(body.substr(kPolicy.size()));
      } else if (body.substr(0, kAchieved.size()) == kAchieved) {
        auto j = nlohmann::json::parse(body.substr(kAchieved.size()), nullptr,
                                       false);
        if (j.is_object()) {
          split.achieved = {j.value("train", 0.0), j.value("validation", 0.0),
                            j.value("test", 0.0)};
        }
      }
      continue;
    }
    if (!header) {
      if (line != "frame_id,partition") {
        throw SplitError("split.csv: unexpected header");
      }
      header = true;
      continue;
    }
    auto cols = modtriage::split(line, ',');
    if (cols.size() != 2) throw SplitError("split.csv: malformed row");
    auto part = parse_partition(trim(cols[1]));
    std::uint64_t id = 0;
    try {
      id = std::stoull(std::string(trim(cols[0])));
    } catch (const std::exception&) {
      throw SplitError("split.csv: bad frame id");
    }
    if (!part || !split.assignment.emplace(id, *part).second) {
      throw SplitError("split.csv: bad or duplicate row for frame " +
                       std::to_string(id));
    }
  }
  if (!header) throw SplitError("split.csv: missing header");
  return split;
}

}  // namespace modtriage
