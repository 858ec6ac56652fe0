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

#ifndef MODTRIAGE_TESTS_SUPPORT_HPP_
#define MODTRIAGE_TESTS_SUPPORT_HPP_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "modtriage/classify.hpp"
#include "modtriage/encode.hpp"
#include "modtriage/ingest.hpp"
#include "modtriage/util.hpp"

namespace modtriage::testing {

// Frame with every protocol field present.
inline Frame make_frame(std::int64_t ts_us, Direction dir, int fc, int unit,
                        std::uint32_t len, std::optional<std::int64_t> iat,
                        int ex, std::string source = "f.pcap") {
  Frame f;
  f.timestamp_us = ts_us;
  f.direction = dir;
  f.function_code = static_cast<std::uint8_t>(fc);
  f.unit_id = static_cast<std::uint8_t>(unit);
  f.payload_len_bytes = len;
  f.iat_us = iat;
  f.exception_code = static_cast<std::uint8_t>(ex);
  f.source_file = std::move(source);
  return f;
}

// Bins used by the token golden fixtures.
inline BinBoundaries fixture_bins() {
  BinBoundaries b;
  b.len_edges = {10, 20, 40};
  b.iat_edges = {1000, 5000, 20000, 60000};
  b.fit_split_id = "fixture";
  return b;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("modtriage_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Little-endian microsecond pcap writer with Ethernet/IPv4/TCP framing.
class PcapBuilder {
 public:
  explicit PcapBuilder(std::uint32_t linktype = 1) {
    put32(0xa1b2c3d4);
    put16(2);
    put16(4);
    put32(0);
    put32(0);
    put32(65535);
    put32(linktype);
  }

  void tcp(std::int64_t ts_us, std::uint16_t sport, std::uint16_t dport,
           const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> b(12, 0x02);
    be16(b, 0x0800);
    b.insert(b.end(), {0x45, 0x00});
    be16(b, static_cast<std::uint16_t>(40 + payload.size()));
    b.insert(b.end(), {0, 1, 0x40, 0, 64, 6, 0, 0, 10, 0, 0, 1, 10, 0, 0, 2});
    be16(b, sport);
    be16(b, dport);
    b.insert(b.end(), {0, 0, 0, 1, 0, 0, 0, 0, 0x50, 0x18, 0xff, 0xff, 0, 0, 0, 0});
    b.insert(b.end(), payload.begin(), payload.end());
    record(ts_us, b);
  }

  void record(std::int64_t ts_us, const std::vector<std::uint8_t>& frame,
              std::optional<std::uint32_t> incl_override = std::nullopt) {
    put32(static_cast<std::uint32_t>(ts_us / 1000000));
    put32(static_cast<std::uint32_t>(ts_us % 1000000));
    put32(incl_override.value_or(static_cast<std::uint32_t>(frame.size())));
    put32(static_cast<std::uint32_t>(frame.size()));
    bytes_.append(frame.begin(), frame.end());
  }

  void raw(const std::string& s) { bytes_ += s; }
  const std::string& bytes() const { return bytes_; }

  static std::vector<std::uint8_t> mbap(std::uint8_t unit,
                                        const std::vector<std::uint8_t>& pdu,
                                        std::uint16_t tid = 1) {
    std::vector<std::uint8_t> b;
    be16(b, tid);
    be16(b, 0);
    be16(b, static_cast<std::uint16_t>(pdu.size() + 1));
    b.push_back(unit);
    b.insert(b.end(), pdu.begin(), pdu.end());
    return b;
  }

 private:
  static void be16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
  }
  void put16(std::uint16_t v) {
    bytes_.push_back(static_cast<char>(v));
    bytes_.push_back(static_cast<char>(v >> 8));
  }
  void put32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>(v >> (8 * i)));
  }
  std::string bytes_;
};

// Replays scripted replies; an empty optional simulates a transport failure.
class ScriptedTransport final : public ChatTransport {
 public:
  explicit ScriptedTransport(std::vector<std::optional<std::string>> replies)
      : replies_(replies.begin(), replies.end()) {}

  ChatResponse complete(const ChatRequest& request) override {
    std::lock_guard lock(mu_);
    requests.push_back(request);
    if (replies_.empty()) throw TransportError("script exhausted");
    auto next = replies_.front();
    replies_.pop_front();
    if (!next) throw TransportError("scripted failure");
    return {*next, TokenUsage{100, 17}};
  }

  std::vector<ChatRequest> requests;

 private:
  std::mutex mu_;
  std::deque<std::optional<std::string>> replies_;
};

}  // namespace modtriage::testing

#endif  // MODTRIAGE_TESTS_SUPPORT_HPP_
