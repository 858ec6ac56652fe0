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

#ifndef MODTRIAGE_LABELSPLIT_HPP_
#define MODTRIAGE_LABELSPLIT_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modtriage/common.hpp"
#include "modtriage/encode.hpp"
#include "modtriage/ingest.hpp"

namespace modtriage {

// Closed interval [start_us, end_us].
struct AttackWindow {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::set<std::string> scenarios;
  std::size_t event_count = 0;

  bool contains(std::int64_t t) const { return start_us <= t && t <= end_us; }
  friend bool operator==(const AttackWindow&, const AttackWindow&) = default;
};

struct WindowPolicy {
  double merge_gap_s = 60.0;
  double tail_s = 10.0;
};

std::vector<AttackWindow> build_windows(std::span<const AttackEvent> events,
                                        const WindowPolicy& policy);

struct LabeledFrame {
  std::uint64_t frame_id = 0;
  Label label = Label::kNormal;
};

std::vector<LabeledFrame> label_frames(std::span<const Frame> frames,
                                       std::span<const AttackWindow> windows);

// Index of the window containing t, if any. Windows must be sorted/disjoint.
std::optional<std::size_t> find_window(std::span<const AttackWindow> windows,
                                       std::int64_t t);

enum class Partition { kTrain, kValidation, kTest };
enum class SplitMode { kByFile, kByTime };

std::string_view to_string(Partition p);
std::optional<Partition> parse_partition(std::string_view s);
std::string_view to_string(SplitMode m);
std::optional<SplitMode> parse_split_mode(std::string_view s);

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

struct SplitPolicy {
  SplitRatios ratios;
  SplitMode mode = SplitMode::kByTime;
  WindowPolicy windows;
};

struct Split {
  std::map<std::uint64_t, Partition> assignment;
  SplitPolicy policy;
  std::vector<AttackWindow> window_manifest;
  SplitRatios achieved;
  Warnings warnings;

  // Content hash of the assignment and policy; bins fitted on this split
  // carry it as fit_split_id.
  std::string id() const;
  std::vector<std::uint64_t> ids_in(Partition p) const;
};

// Contiguous time blocks (by_time) or whole files (by_file). Cuts snap
// outward so no window has frames on both sides. Throws SplitError when a
// partition would end up empty.
Split make_split(std::span<const Frame> frames,
                 std::span<const LabeledFrame> labels,
                 std::span<const AttackWindow> windows,
                 const SplitPolicy& policy);

struct LeakageReport {
  bool pass = true;
  std::vector<std::string> violations;
};

// Checks: every frame assigned exactly once, no window spans partitions and,
// when bins are given, they were fitted on this split.
LeakageReport verify_no_leakage(const Split& split,
                                std::span<const Frame> frames,
                                const BinBoundaries* bins = nullptr);

// Fits bins on `train_frames`, refusing any frame the split does not tag
// train.
FitResult fit_bins_on_train(std::span<const Frame> train_frames,
                            const Split& split, FitOptions options = {});

std::string windows_to_json(std::span<const AttackWindow> windows,
                            const WindowPolicy& policy);
std::vector<AttackWindow> windows_from_json(std::string_view text);

std::string policy_to_json(const SplitPolicy& policy);
SplitPolicy policy_from_json(std::string_view text);

// `frame_id,partition` rows after a `# policy: {...}` comment line.
std::string split_to_csv(const Split& split);
Split split_from_csv(std::string_view text);

}  // namespace modtriage

#endif  // MODTRIAGE_LABELSPLIT_HPP_
