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

#include "modtriage/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <future>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "json.hpp"

#include "modtriage/util.hpp"

namespace modtriage {

namespace {

constexpr std::size_t kMbapHeaderLen = 7;

enum LinkType : std::uint32_t {
  kLinkNull = 0,
  kLinkEthernet = 1,
  kLinkRaw = 101,
  kLinkLinuxSll = 113,
  kLinkIpv4 = 228,
  kLinkIpv6 = 229,
};

std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, bool swap)
      : data_(data), swap_(swap) {}

  std::uint32_t u32(std::size_t off) const {
    std::uint32_t v = 0;
    if (swap_) {
      for (int i = 0; i < 4; ++i) v = (v << 8) | data_[off + i];
    } else {
      for (int i = 3; i >= 0; --i) v = (v << 8) | data_[off + i];
    }
    return v;
  }

 private:
  std::span<const std::uint8_t> data_;
  bool swap_;
};

Frame malformed_frame(Direction dir, std::int64_t ts) {
  Frame f;
  f.direction = dir;
  f.timestamp_us = ts;
  f.parse_warning = true;
  return f;
}

// Returns the TCP payload and ports, or nothing for non-TCP traffic.
struct TcpSegment {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::span<const std::uint8_t> payload;
};

std::optional<TcpSegment> parse_tcp(std::span<const std::uint8_t> seg) {
  if (seg.size() < 20) return std::nullopt;
  std::size_t data_off = static_cast<std::size_t>(seg[12] >> 4) * 4;
  if (data_off < 20 || data_off > seg.size()) return std::nullopt;
  TcpSegment out;
  out.src_port = be16(seg, 0);
  out.dst_port = be16(seg, 2);
  out.payload = seg.subspan(data_off);
  return out;
}

std::optional<TcpSegment> parse_ip(std::span<const std::uint8_t> pkt) {
  if (pkt.empty()) return std::nullopt;
  int version = pkt[0] >> 4;
  if (version == 4) {
    if (pkt.size() < 20) return std::nullopt;
    std::size_t ihl = static_cast<std::size_t>(pkt[0] & 0x0f) * 4;
    std::size_t total = be16(pkt, 2);
    std::uint16_t frag = be16(pkt, 6) & 0x1fff;
    if (ihl < 20 || total < ihl || pkt[9] != 6 || frag != 0) return std::nullopt;
    total = std::min(total, pkt.size());
    return parse_tcp(pkt.subspan(ihl, total - ihl));
  }
  if (version == 6) {
    if (pkt.size() < 40 || pkt[6] != 6) return std::nullopt;
    std::size_t len = std::min<std::size_t>(be16(pkt, 4), pkt.size() - 40);
    return parse_tcp(pkt.subspan(40, len));
  }
  return std::nullopt;
}

std::optional<TcpSegment> parse_link(std::span<const std::uint8_t> pkt,
                                     std::uint32_t link) {
  switch (link) {
    case kLinkEthernet: {
      if (pkt.size() < 14) return std::nullopt;
      std::size_t off = 12;
      std::uint16_t ethertype = be16(pkt, off);
      while ((ethertype == 0x8100 || ethertype == 0x88a8) &&
             pkt.size() >= off + 6) {
        off += 4;
        ethertype = be16(pkt, off);
      }
      if (ethertype != 0x0800 && ethertype != 0x86dd) return std::nullopt;
      return parse_ip(pkt.subspan(off + 2));
    }
    case kLinkLinuxSll:
      if (pkt.size() < 16) return std::nullopt;
      return parse_ip(pkt.subspan(16));
    case kLinkNull:
      if (pkt.size() < 4) return std::nullopt;
      return parse_ip(pkt.subspan(4));
    case kLinkRaw:
    case kLinkIpv4:
    case kLinkIpv6:
      return parse_ip(pkt);
    default:
      return std::nullopt;
  }
}

CaptureResult parse_pcap(const std::string& bytes, const CaptureOptions& opt,
                         const std::string& source_id) {
  std::span<const std::uint8_t> data(
      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
  if (data.size() < 24) {
    throw IngestError("pcap: missing global header in " + source_id);
  }
  std::uint32_t magic_le = ByteReader(data, false).u32(0);
  bool swap = false;
  bool nanos = false;
  switch (magic_le) {
    case 0xa1b2c3d4: break;
    case 0xa1b23c4d: nanos = true; break;
    case 0xd4c3b2a1: swap = true; break;
    case 0x4d3cb2a1: swap = true; nanos = true; break;
    default:
      throw IngestError("pcap: bad magic in " + source_id +
                        " (pcapng is not supported)");
  }
  ByteReader rd(data, swap);
  std::uint32_t link = rd.u32(20) & 0x0fffffff;

  CaptureResult result;
  std::size_t off = 24;
  std::uint64_t seq = 0;
  while (off < data.size()) {
    if (data.size() - off < 16) {
      ++result.stats.truncated_records;
      result.stats.warnings.push_back(source_id +
                                      ": truncated trailing record header");
      break;
    }
    std::int64_t sec = rd.u32(off);
    std::int64_t frac = rd.u32(off + 4);
    std::size_t incl = rd.u32(off + 8);
    off += 16;
    if (incl > data.size() - off) {
      ++result.stats.truncated_records;
      result.stats.warnings.push_back(source_id +
                                      ": truncated trailing record body");
      break;
    }
    auto pkt = data.subspan(off, incl);
    off += incl;
    std::int64_t ts = sec * 1'000'000 + (nanos ? frac / 1000 : frac);

    auto tcp = parse_link(pkt, link);
    if (!tcp || tcp->payload.empty()) {
      ++result.stats.non_modbus_skipped;
      continue;
    }
    Direction dir;
    if (tcp->dst_port == opt.modbus_port) {
      dir = Direction::kClientToServer;
    } else if (tcp->src_port == opt.modbus_port) {
      dir = Direction::kServerToClient;
    } else {
      ++result.stats.non_modbus_skipped;
      continue;
    }
    for (auto& f : dissect_modbus_payload(tcp->payload, dir, ts, result.stats)) {
      f.seq_no = seq++;
      f.source_file = source_id;
      result.frames.push_back(std::move(f));
    }
  }
  return result;
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

// Parses an optional integer field: empty means absent.
template <typename T>
bool parse_opt_field(std::string_view s, std::optional<T>& out) {
  s = trim(s);
  if (s.empty()) {
    out.reset();
    return true;
  }
  long long v = 0;
  if (!parse_int(s, v)) return false;
  if (v < static_cast<long long>(std::numeric_limits<T>::min()) ||
      v > static_cast<long long>(std::numeric_limits<T>::max())) {
    return false;
  }
  out = static_cast<T>(v);
  return true;
}

void check_exception_convention(const Frame& f, IngestStats& stats) {
  if (f.exception_code && *f.exception_code > 0 && f.function_code &&
      (*f.function_code & 0x80) == 0) {
    ++stats.exception_fc_violations;
    stats.warnings.push_back(f.source_file + "#" + std::to_string(f.seq_no) +
                             ": exception code without exception function code");
  }
}

constexpr std::string_view kCsvHeader =
    "timestamp_us,direction,function_code,unit_id,payload_len_bytes,"
    "exception_code,source_file";

CaptureResult parse_csv(const std::string& text, const std::string& source_id) {
  CaptureResult result;
  auto lines = split(text, '\n');
  std::size_t i = 0;
  while (i < lines.size() &&
         (trim(lines[i]).empty() || trim(lines[i]).front() == '#')) {
    ++i;
  }
  if (i == lines.size() || trim(lines[i]) != kCsvHeader) {
    throw IngestError("csv: missing or unexpected header in " + source_id);
  }
  std::map<std::string, std::uint64_t> seq;
  for (++i; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    auto cols = split(line, ',');
    Frame f;
    bool ok = cols.size() == 7 && parse_int(cols[0], f.timestamp_us);
    if (ok) {
      auto dir = parse_direction(trim(cols[1]));
      ok = dir.has_value();
      if (ok) f.direction = *dir;
    }
    ok = ok && parse_opt_field(cols[2], f.function_code) &&
         parse_opt_field(cols[3], f.unit_id) &&
         parse_opt_field(cols[4], f.payload_len_bytes) &&
         parse_opt_field(cols[5], f.exception_code);
    if (!ok) {
      ++result.stats.truncated_records;
      result.stats.warnings.push_back(source_id + ": skipped malformed row " +
                                      std::to_string(i + 1));
      continue;
    }
    auto src = trim(cols[6]);
    f.source_file = src.empty() ? source_id : std::string(src);
    f.seq_no = seq[f.source_file]++;
    check_exception_convention(f, result.stats);
    result.frames.push_back(std::move(f));
  }
  return result;
}

template <typename T>
bool json_opt(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    out.reset();
    return true;
  }
  if (!it->is_number_integer()) return false;
  auto v = it->get<long long>();
  if (v < static_cast<long long>(std::numeric_limits<T>::min()) ||
      v > static_cast<long long>(std::numeric_limits<T>::max())) {
    return false;
  }
  out = static_cast<T>(v);
  return true;
}

CaptureResult parse_jsonl(const std::string& text,
                          const std::string& source_id) {
  CaptureResult result;
  std::map<std::string, std::uint64_t> seq;
  auto lines = split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_object() && j.contains("run")) continue;  // artifact header
    Frame f;
    bool ok = j.is_object() && j.contains("timestamp_us") &&
              j["timestamp_us"].is_number_integer() &&
              j.contains("direction") && j["direction"].is_string();
    if (ok) {
      f.timestamp_us = j["timestamp_us"].get<std::int64_t>();
      auto dir = parse_direction(j["direction"].get<std::string>());
      ok = dir.has_value();
      if (ok) f.direction = *dir;
    }
    ok = ok && json_opt(j, "function_code", f.function_code) &&
         json_opt(j, "unit_id", f.unit_id) &&
         json_opt(j, "payload_len_bytes", f.payload_len_bytes) &&
         json_opt(j, "exception_code", f.exception_code) &&
         json_opt(j, "iat_us", f.iat_us);
    if (!ok) {
      ++result.stats.truncated_records;
      result.stats.warnings.push_back(source_id + ": skipped malformed record " +
                                      std::to_string(i + 1));
      continue;
    }
    auto src = j.value("source_file", nlohmann::json());
    f.source_file = src.is_string() && !src.get<std::string>().empty()
                        ? src.get<std::string>()
                        : source_id;
    if (j.contains("seq_no") && j["seq_no"].is_number_unsigned()) {
      f.seq_no = j["seq_no"].get<std::uint64_t>();
      seq[f.source_file] = std::max(seq[f.source_file], f.seq_no + 1);
    } else {
      f.seq_no = seq[f.source_file]++;
    }
    if (j.contains("frame_id") && j["frame_id"].is_number_unsigned()) {
      f.frame_id = j["frame_id"].get<std::uint64_t>();
    }
    f.parse_warning = j.value("parse_warning", false);
    check_exception_convention(f, result.stats);
    result.frames.push_back(std::move(f));
  }
  return result;
}

void merge_stats(IngestStats& into, IngestStats&& from) {
  into.non_modbus_skipped += from.non_modbus_skipped;
  into.malformed_payloads += from.malformed_payloads;
  into.truncated_records += from.truncated_records;
  into.exception_fc_violations += from.exception_fc_violations;
  for (auto& w : from.warnings) into.warnings.push_back(std::move(w));
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::optional<std::int64_t> parse_offset_s(std::string_view s) {
  s = trim(s);
  if (s == "Z" || s == "UTC" || s == "utc") return 0;
  if (s.size() < 3 || (s[0] != '+' && s[0] != '-')) return std::nullopt;
  int sign = s[0] == '-' ? -1 : 1;
  auto body = s.substr(1);
  int hh = 0, mm = 0;
  if (body.size() == 5 && body[2] == ':') {
    if (!parse_int(body.substr(0, 2), hh) || !parse_int(body.substr(3, 2), mm))
      return std::nullopt;
  } else if (body.size() == 4) {
    if (!parse_int(body.substr(0, 2), hh) || !parse_int(body.substr(2, 2), mm))
      return std::nullopt;
  } else if (body.size() == 2) {
    if (!parse_int(body, hh)) return std::nullopt;
  } else {
    return std::nullopt;
  }
  if (hh > 23 || mm > 59) return std::nullopt;
  return sign * (hh * 3600 + mm * 60);
}

}  // namespace

CaptureFormat parse_capture_format(std::string_view tag) {
  if (tag == "pcap") return CaptureFormat::kPcap;
  if (tag == "csv") return CaptureFormat::kCsv;
  if (tag == "jsonl") return CaptureFormat::kJsonl;
  throw IngestError("unknown capture format '" + std::string(tag) + "'");
}

std::vector<Frame> dissect_modbus_payload(std::span<const std::uint8_t> payload,
                                          Direction direction,
                                          std::int64_t timestamp_us,
                                          IngestStats& stats) {
  std::vector<Frame> out;
  std::size_t off = 0;
  while (off < payload.size()) {
    auto rest = payload.subspan(off);
    if (rest.size() < kMbapHeaderLen) {
      ++stats.malformed_payloads;
      out.push_back(malformed_frame(direction, timestamp_us));
      break;
    }
    std::uint16_t protocol_id = be16(rest, 2);
    std::uint16_t length = be16(rest, 4);
    // length covers the unit id plus the PDU.
    if (protocol_id != 0 || length < 2 ||
        static_cast<std::size_t>(length) + 6 > rest.size()) {
      ++stats.malformed_payloads;
      out.push_back(malformed_frame(direction, timestamp_us));
      break;
    }
    auto pdu = rest.subspan(kMbapHeaderLen, length - 1u);
    Frame f;
    f.direction = direction;
    f.timestamp_us = timestamp_us;
    f.unit_id = rest[6];
    f.function_code = pdu[0];
    f.payload_len_bytes = static_cast<std::uint32_t>(pdu.size());
    if (pdu.size() >= 2) {
      f.exception_code = (pdu[0] & 0x80) ? pdu[1] : 0;
    } else {
      ++stats.malformed_payloads;
      f.parse_warning = true;
    }
    out.push_back(f);
    off += 6u + length;
  }
  return out;
}

CaptureResult parse_capture(const std::filesystem::path& path,
                            CaptureFormat format,
                            const CaptureOptions& options) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw IngestError(std::string("ingest: ") + e.what());
  }
  std::string source_id =
      options.source_id.empty() ? path.filename().string() : options.source_id;
  switch (format) {
    case CaptureFormat::kPcap: return parse_pcap(bytes, options, source_id);
    case CaptureFormat::kCsv: return parse_csv(bytes, source_id);
    case CaptureFormat::kJsonl: return parse_jsonl(bytes, source_id);
  }
  throw IngestError("unknown capture format");
}

IatStats compute_iat(std::vector<Frame>& frames, FlowKey key) {
  IatStats stats;
  std::map<std::pair<std::string, int>, std::int64_t> last;
  for (auto& f : frames) {
    int dir = key == FlowKey::kPerDirectionPair ? static_cast<int>(f.direction)
                                                : -1;
    auto flow = std::make_pair(f.source_file, dir);
    auto it = last.find(flow);
    if (it == last.end()) {
      f.iat_us.reset();
      last.emplace(std::move(flow), f.timestamp_us);
      continue;
    }
    std::int64_t diff = f.timestamp_us - it->second;
    if (diff < 0) {
      ++stats.clock_regressions;
      f.iat_us.reset();
    } else {
      f.iat_us = diff;
    }
    it->second = f.timestamp_us;
  }
  return stats;
}

DedupResult dedup_normalize(std::vector<Frame> frames) {
  std::stable_sort(frames.begin(), frames.end(),
                   [](const Frame& a, const Frame& b) {
                     return std::tie(a.source_file, a.timestamp_us, a.seq_no) <
                            std::tie(b.source_file, b.timestamp_us, b.seq_no);
                   });
  using Key = std::tuple<std::int64_t, Direction, std::optional<std::uint8_t>,
                         std::optional<std::uint8_t>,
                         std::optional<std::uint32_t>,
                         std::optional<std::uint8_t>>;
  std::set<Key> seen;
  DedupResult out;
  out.frames.reserve(frames.size());
  for (auto& f : frames) {
    Key k{f.timestamp_us, f.direction,         f.function_code,
          f.unit_id,      f.payload_len_bytes, f.exception_code};
    if (!seen.insert(k).second) {
      ++out.duplicates_removed;
      continue;
    }
    out.frames.push_back(std::move(f));
  }
  return out;
}

void assign_frame_ids(std::vector<Frame>& frames) {
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i].frame_id = i;
}

std::optional<std::int64_t> parse_iso8601_us(std::string_view s,
                                             std::int64_t default_offset_s) {
  s = trim(s);
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' ||
      (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':') {
    return std::nullopt;
  }
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), mo) ||
      !parse_int(s.substr(8, 2), d) || !parse_int(s.substr(11, 2), h) ||
      !parse_int(s.substr(14, 2), mi) || !parse_int(s.substr(17, 2), sec)) {
    return std::nullopt;
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  std::int64_t micros = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (digits < 6) micros = micros * 10 + (s[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    for (int k = digits; k < 6; ++k) micros *= 10;
  }
  std::int64_t offset = default_offset_s;
  if (pos < s.size()) {
    auto off = parse_offset_s(s.substr(pos));
    if (!off) return std::nullopt;
    offset = *off;
  }
  std::int64_t days = days_from_civil(y, static_cast<unsigned>(mo),
                                      static_cast<unsigned>(d));
  std::int64_t secs = days * 86400 + h * 3600 + mi * 60 + sec - offset;
  return secs * 1'000'000 + micros;
}

AttackLogResult parse_attack_log_text(std::string_view text,
                                      std::string_view source_id) {
  AttackLogResult result;
  std::int64_t zone = 0;
  auto lines = split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto body = trim(line.substr(1));
      constexpr std::string_view kTz = "source_tz";
      if (body.substr(0, kTz.size()) == kTz) {
        auto val = trim(body.substr(kTz.size()));
        if (!val.empty() && (val.front() == ':' || val.front() == '=')) {
          val = trim(val.substr(1));
        }
        auto off = parse_offset_s(val);
        if (off) {
          zone = *off;
        } else {
          result.warnings.push_back(std::string(source_id) +
                                    ": unsupported source_tz '" +
                                    std::string(val) + "', assuming UTC");
        }
      }
      continue;
    }
    if (line == "timestamp_iso8601,scenario") continue;
    auto comma = line.find(',');
    auto ts = parse_iso8601_us(line.substr(0, comma), zone);
    if (!ts) {
      result.warnings.push_back(std::string(source_id) + ": line " +
                                std::to_string(i + 1) +
                                ": unparseable timestamp, row skipped");
      continue;
    }
    AttackEvent ev;
    ev.timestamp_us = *ts;
    ev.scenario = comma == std::string_view::npos
                      ? std::string()
                      : std::string(trim(line.substr(comma + 1)));
    ev.source_file = std::string(source_id);
    result.events.push_back(std::move(ev));
  }
  std::stable_sort(result.events.begin(), result.events.end(),
                   [](const AttackEvent& a, const AttackEvent& b) {
                     return a.timestamp_us < b.timestamp_us;
                   });
  return result;
}

AttackLogResult parse_attack_log(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw IngestError(std::string("attack log: ") + e.what());
  }
  return parse_attack_log_text(text, path.filename().string());
}

namespace {

template <typename T>
std::string opt_str(const std::optional<T>& v) {
  return v ? std::to_string(static_cast<long long>(*v)) : std::string();
}

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(static_cast<long long>(*v)) : nlohmann::json();
}

}  // namespace

std::string frames_to_csv(std::span<const Frame> frames) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& f : frames) {
    out += std::to_string(f.timestamp_us);
    out += ',';
    out += to_string(f.direction);
    out += ',' + opt_str(f.function_code) + ',' + opt_str(f.unit_id) + ',' +
           opt_str(f.payload_len_bytes) + ',' + opt_str(f.exception_code) +
           ',' + f.source_file + '\n';
  }
  return out;
}

std::string frames_to_jsonl(std::span<const Frame> frames) {
  std::string out;
  for (const auto& f : frames) {
    nlohmann::ordered_json j;
    j["frame_id"] = f.frame_id;
    j["seq_no"] = f.seq_no;
    j["timestamp_us"] = f.timestamp_us;
    j["direction"] = to_string(f.direction);
    j["function_code"] = opt_json(f.function_code);
    j["unit_id"] = opt_json(f.unit_id);
    j["payload_len_bytes"] = opt_json(f.payload_len_bytes);
    j["iat_us"] = opt_json(f.iat_us);
    j["exception_code"] = opt_json(f.exception_code);
    j["source_file"] = f.source_file;
    j["parse_warning"] = f.parse_warning;
    out += j.dump();
    out += '\n';
  }
  return out;
}

IngestResult ingest_captures(std::span<const IngestPlanItem> items,
                             const CaptureOptions& options, FlowKey key) {
  std::vector<std::future<CaptureResult>> tasks;
  tasks.reserve(items.size());
  for (const auto& item : items) {
    tasks.push_back(std::async(std::launch::async, [&item, options] {
      return parse_capture(item.path, item.format, options);
    }));
  }
  IngestResult result;
  std::vector<Frame> merged;
  for (auto& t : tasks) {
    auto part = t.get();
    merge_stats(result.stats, std::move(part.stats));
    for (auto& f : part.frames) merged.push_back(std::move(f));
  }
  auto dedup = dedup_normalize(std::move(merged));
  result.duplicates_removed = dedup.duplicates_removed;
  result.frames = std::move(dedup.frames);
  result.iat = compute_iat(result.frames, key);
  assign_frame_ids(result.frames);
  return result;
}

}  // namespace modtriage
