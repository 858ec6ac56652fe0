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

// Writes a small synthetic Modbus/TCP capture and its attack log.
//
//   make_synthetic <out_dir> [seed]
//
// Produces <out_dir>/plant.pcap and <out_dir>/attacks.csv. A master at
// 10.0.0.10 polls two units on 10.0.0.20:502; six attack episodes inject
// write bursts, diagnostics and exception traffic.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "modtriage/util.hpp"

namespace {

constexpr std::int64_t kEpochS = 1709251200;  // 2024-03-01T00:00:00Z
constexpr std::int64_t kDurationUs = 1800LL * 1000000;

struct Packet {
  std::int64_t ts_us;
  bool to_server;
  std::uint16_t other_port;  // 502 for Modbus, anything else for noise
  std::vector<std::uint8_t> payload;
};

void put16be(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void put32le(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put16le(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

std::vector<std::uint8_t> mbap(std::uint16_t tid, std::uint8_t unit,
                               const std::vector<std::uint8_t>& pdu) {
  std::vector<std::uint8_t> b;
  put16be(b, tid);
  put16be(b, 0);
  put16be(b, static_cast<std::uint16_t>(pdu.size() + 1));
  b.push_back(unit);
  b.insert(b.end(), pdu.begin(), pdu.end());
  return b;
}

std::string frame_bytes(const Packet& p, std::uint32_t seq) {
  const std::uint8_t client_ip[4] = {10, 0, 0, 10};
  const std::uint8_t server_ip[4] = {10, 0, 0, 20};
  const std::uint16_t client_port = 40123;
  std::vector<std::uint8_t> b;
  // Ethernet
  for (int i = 0; i < 12; ++i) b.push_back(static_cast<std::uint8_t>(i + 1));
  put16be(b, 0x0800);
  // IPv4
  const std::uint16_t total = static_cast<std::uint16_t>(20 + 20 + p.payload.size());
  b.insert(b.end(), {0x45, 0x00});
  put16be(b, total);
  put16be(b, static_cast<std::uint16_t>(seq));
  b.insert(b.end(), {0x40, 0x00, 64, 6, 0, 0});
  const auto* src = p.to_server ? client_ip : server_ip;
  const auto* dst = p.to_server ? server_ip : client_ip;
  b.insert(b.end(), src, src + 4);
  b.insert(b.end(), dst, dst + 4);
  // TCP
  put16be(b, p.to_server ? client_port : p.other_port);
  put16be(b, p.to_server ? p.other_port : client_port);
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(seq >> (8 * (3 - i))));
  for (int i = 0; i < 4; ++i) b.push_back(0);
  b.insert(b.end(), {0x50, 0x18, 0xff, 0xff, 0, 0, 0, 0});
  b.insert(b.end(), p.payload.begin(), p.payload.end());
  return std::string(b.begin(), b.end());
}

std::string iso8601(std::int64_t ts_us) {
  std::int64_t secs = kEpochS + ts_us / 1000000;
  std::int64_t days = secs / 86400;
  std::int64_t rem = secs % 86400;
  // civil_from_days
  days += 719468;
  std::int64_t era = days / 146097;
  std::int64_t doe = days - era * 146097;
  std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  std::int64_t y = yoe + era * 400;
  std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  std::int64_t mp = (5 * doy + 2) / 153;
  std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
  std::int64_t m = mp < 10 ? mp + 3 : mp - 9;
  if (m <= 2) ++y;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04lld-%02lld-%02lldT%02lld:%02lld:%02lld.%03lldZ",
                static_cast<long long>(y), static_cast<long long>(m),
                static_cast<long long>(d), static_cast<long long>(rem / 3600),
                static_cast<long long>(rem / 60 % 60),
                static_cast<long long>(rem % 60),
                static_cast<long long>(ts_us / 1000 % 1000));
  return buf;
}

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  void request_response(std::int64_t t, std::uint8_t unit, std::uint8_t fc,
                        std::uint16_t count, std::uint8_t exception = 0) {
    std::vector<std::uint8_t> req{fc};
    put16be(req, static_cast<std::uint16_t>(uniform(0, 400)));
    if (fc == 5 || fc == 6) {
      put16be(req, static_cast<std::uint16_t>(uniform(0, 0xff00)));
    } else if (fc == 16 || fc == 15) {
      put16be(req, count);
      req.push_back(static_cast<std::uint8_t>(2 * count));
      for (int i = 0; i < 2 * count; ++i) req.push_back(static_cast<std::uint8_t>(uniform(0, 255)));
    } else if (fc == 8) {
      put16be(req, static_cast<std::uint16_t>(uniform(0, 4)));
    } else {
      put16be(req, count);
    }
    const std::uint16_t tid = tid_++;
    packets_.push_back({t, true, 502, mbap(tid, unit, req)});

    std::vector<std::uint8_t> resp;
    if (exception) {
      resp = {static_cast<std::uint8_t>(fc | 0x80), exception};
    } else if (fc <= 4) {
      std::uint8_t bytes = fc <= 2 ? static_cast<std::uint8_t>((count + 7) / 8)
                                   : static_cast<std::uint8_t>(2 * count);
      resp = {fc, bytes};
      for (int i = 0; i < bytes; ++i) resp.push_back(static_cast<std::uint8_t>(uniform(0, 255)));
    } else {
      resp = req;
      if (fc == 15 || fc == 16) resp.resize(5);
    }
    const std::int64_t latency = uniform(2000, 9000);
    packets_.push_back({t + latency, false, 502, mbap(tid, unit, resp)});
  }

  void noise(std::int64_t t) {
    packets_.push_back({t, true, 8080, {'G', 'E', 'T', ' ', '/'}});
  }

  std::int64_t uniform(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }

  std::vector<Packet>& packets() { return packets_; }

 private:
  std::mt19937_64 rng_;
  std::uint16_t tid_ = 1;
  std::vector<Packet> packets_;
};

struct Episode {
  std::int64_t start_s;
  std::int64_t length_s;
  const char* scenario;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_synthetic <out_dir> [seed]\n";
    return 2;
  }
  const std::filesystem::path out = argv[1];
  const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 7;
  std::filesystem::create_directories(out);
  Generator g(seed);

  // Polling loop: alternating read requests every ~0.5 s with jitter.
  for (std::int64_t t = 0; t < kDurationUs;) {
    const auto roll = g.uniform(0, 99);
    const std::uint8_t unit = roll % 2 ? 1 : 2;
    if (roll < 45) {
      g.request_response(t, unit, 3, static_cast<std::uint16_t>(g.uniform(1, 12)));
    } else if (roll < 75) {
      g.request_response(t, unit, 4, static_cast<std::uint16_t>(g.uniform(1, 6)));
    } else if (roll < 90) {
      g.request_response(t, unit, 1, static_cast<std::uint16_t>(g.uniform(1, 32)));
    } else if (roll < 96) {
      g.request_response(t, unit, 2, static_cast<std::uint16_t>(g.uniform(1, 16)));
    } else if (roll < 98) {
      // Operator setpoint change.
      g.request_response(t, unit, 6, 1);
    } else {
      g.request_response(t, unit, 3, 125, 2);  // illegal address
    }
    if (g.uniform(0, 199) == 0) g.noise(t + 1500);
    t += 400000 + g.uniform(0, 200000);
  }

  const std::vector<Episode> episodes{
      {150, 30, "coil_write_burst"}, {420, 25, "register_overwrite"},
      {800, 20, "diagnostics_scan"}, {1230, 30, "coil_write_burst"},
      {1530, 25, "register_overwrite"}, {1690, 30, "diagnostics_scan"}};

  std::string log = "# source_tz: +00:00\ntimestamp_iso8601,scenario\n";
  for (const auto& ep : episodes) {
    const std::int64_t start = ep.start_s * 1000000;
    const std::int64_t end = start + ep.length_s * 1000000;
    std::int64_t next_log = start;
    for (std::int64_t t = start; t < end;) {
      if (t >= next_log) {
        log += iso8601(t) + "," + ep.scenario + "\n";
        next_log += 5 * 1000000;
      }
      const auto roll = g.uniform(0, 99);
      const std::string_view s = ep.scenario;
      if (s == "coil_write_burst") {
        if (roll < 70) g.request_response(t, 1, 5, 1);
        else if (roll < 85) g.request_response(t, 1, 15, 8);
        else g.request_response(t, 1, 1, 16);
      } else if (s == "register_overwrite") {
        if (roll < 55) g.request_response(t, 2, 16, static_cast<std::uint16_t>(g.uniform(2, 20)));
        else if (roll < 75) g.request_response(t, 2, 6, 1, roll < 65 ? 3 : 0);
        else g.request_response(t, 2, 3, static_cast<std::uint16_t>(g.uniform(1, 8)));
      } else {
        if (roll < 40) g.request_response(t, static_cast<std::uint8_t>(g.uniform(1, 4)), 8, 1);
        else if (roll < 60) g.request_response(t, 1, 43, 1, 1);
        else if (roll < 80) g.request_response(t, 1, 90, 1, 1);
        else g.request_response(t, 1, 4, 2, 2);
      }
      t += g.uniform(8000, 60000);
    }
  }

  auto& packets = g.packets();
  std::stable_sort(packets.begin(), packets.end(),
                   [](const Packet& a, const Packet& b) { return a.ts_us < b.ts_us; });

  std::string pcap;
  put32le(pcap, 0xa1b2c3d4);
  put16le(pcap, 2);
  put16le(pcap, 4);
  put32le(pcap, 0);
  put32le(pcap, 0);
  put32le(pcap, 65535);
  put32le(pcap, 1);
  std::uint32_t seq = 1;
  for (const auto& p : packets) {
    auto bytes = frame_bytes(p, seq++);
    const std::int64_t abs_us = kEpochS * 1000000 + p.ts_us;
    put32le(pcap, static_cast<std::uint32_t>(abs_us / 1000000));
    put32le(pcap, static_cast<std::uint32_t>(abs_us % 1000000));
    put32le(pcap, static_cast<std::uint32_t>(bytes.size()));
    put32le(pcap, static_cast<std::uint32_t>(bytes.size()));
    pcap += bytes;
  }
  modtriage::write_file_atomic(out / "plant.pcap", pcap);
  modtriage::write_file_atomic(out / "attacks.csv", log);
  std::cout << "wrote " << packets.size() << " packets to "
            << (out / "plant.pcap").string() << "\n";
  return 0;
}
