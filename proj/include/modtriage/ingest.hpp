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

#ifndef MODTRIAGE_INGEST_HPP_
#define MODTRIAGE_INGEST_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modtriage/common.hpp"

namespace modtriage {

// One Modbus/TCP PDU with timing. Protocol fields are absent when the payload
// could not be dissected far enough to recover them.
struct Frame {
  std::uint64_t frame_id = 0;  // assigned after normalization
  std::uint64_t seq_no = 0;    // ordinal within source_file
  std::int64_t timestamp_us = 0;
  Direction direction = Direction::kClientToServer;
  std::optional<std::uint8_t> function_code;
  std::optional<std::uint8_t> unit_id;
  std::optional<std::uint32_t> payload_len_bytes;
  std::optional<std::int64_t> iat_us;
  std::optional<std::uint8_t> exception_code;
  std::string source_file;
  bool parse_warning = false;

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct AttackEvent {
  std::int64_t timestamp_us = 0;
  std::string scenario;
  std::string source_file;

  friend bool operator==(const AttackEvent&, const AttackEvent&) = default;
};

enum class CaptureFormat { kPcap, kCsv, kJsonl };

// Throws IngestError for an unknown tag.
CaptureFormat parse_capture_format(std::string_view tag);

struct CaptureOptions {
  std::uint16_t modbus_port = 502;
  // Identifier stored in Frame::source_file; defaults to the file name.
  std::string source_id;
};

struct IngestStats {
  std::size_t non_modbus_skipped = 0;
  std::size_t malformed_payloads = 0;
  std::size_t truncated_records = 0;
  std::size_t exception_fc_violations = 0;
  Warnings warnings;
};

struct CaptureResult {
  std::vector<Frame> frames;
  IngestStats stats;
};

// Frames in capture order with seq_no assigned per source file. iat_us is
// left absent; see compute_iat.
CaptureResult parse_capture(const std::filesystem::path& path,
                            CaptureFormat format,
                            const CaptureOptions& options = {});

// Dissects one TCP payload travelling in `direction`. Stacked PDUs yield one
// frame each; malformed content yields a frame with absent protocol fields
// and parse_warning set. Exposed for fixtures and tests.
std::vector<Frame> dissect_modbus_payload(std::span<const std::uint8_t> payload,
                                          Direction direction,
                                          std::int64_t timestamp_us,
                                          IngestStats& stats);

enum class FlowKey { kPerFile, kPerDirectionPair };

struct IatStats {
  std::size_t clock_regressions = 0;
};

// Fills iat_us from timestamp differences within each flow. The first frame
// of a flow and frames whose predecessor is later in time get absent iat.
IatStats compute_iat(std::vector<Frame>& frames,
                     FlowKey key = FlowKey::kPerDirectionPair);

struct DedupResult {
  std::vector<Frame> frames;
  std::size_t duplicates_removed = 0;
};

DedupResult dedup_normalize(std::vector<Frame> frames);

// Sets frame_id to the position in `frames`.
void assign_frame_ids(std::vector<Frame>& frames);

struct AttackLogResult {
  std::vector<AttackEvent> events;
  Warnings warnings;
};

AttackLogResult parse_attack_log(const std::filesystem::path& path);
AttackLogResult parse_attack_log_text(std::string_view text,
                                      std::string_view source_id);

// Parses "YYYY-MM-DDTHH:MM:SS[.ffffff][Z|+hh:mm|-hh:mm]". Timestamps without
// an explicit zone are shifted by `default_offset_s`.
std::optional<std::int64_t> parse_iso8601_us(std::string_view s,
                                             std::int64_t default_offset_s = 0);

// CSV fallback schema:
// timestamp_us,direction,function_code,unit_id,payload_len_bytes,exception_code,source_file
std::string frames_to_csv(std::span<const Frame> frames);
std::string frames_to_jsonl(std::span<const Frame> frames);

struct IngestPlanItem {
  std::filesystem::path path;
  CaptureFormat format = CaptureFormat::kPcap;
};

struct IngestResult {
  std::vector<Frame> frames;
  IngestStats stats;
  std::size_t duplicates_removed = 0;
  IatStats iat;
};

// Parses every capture (concurrently, one task per file), then merges,
// deduplicates, computes IAT and assigns frame ids. The result does not
// depend on scheduling.
IngestResult ingest_captures(std::span<const IngestPlanItem> items,
                             const CaptureOptions& options, FlowKey key);

}  // namespace modtriage

#endif  // MODTRIAGE_INGEST_HPP_
