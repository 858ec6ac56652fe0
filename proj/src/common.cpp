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

#include "modtriage/common.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <sstream>

#include "modtriage/util.hpp"

namespace modtriage {

std::string_view to_string(Direction d) {
  return d == Direction::kClientToServer ? "C2S" : "S2C";
}

std::string_view to_string(Label l) {
  return l == Label::kCritical ? "critical" : "normal";
}

std::optional<Direction> parse_direction(std::string_view s) {
  if (s == "C2S") return Direction::kClientToServer;
  if (s == "S2C") return Direction::kServerToClient;
  return std::nullopt;
}

std::optional<Label> parse_label(std::string_view s) {
  if (s == "critical") return Label::kCritical;
  if (s == "normal") return Label::kNormal;
  return std::nullopt;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::size_t nearest_rank_index(std::size_t n, std::uint64_t num,
                               std::uint64_t den) {
  if (n == 0) throw PreconditionError("nearest_rank: empty sample");
  std::uint64_t rank = (static_cast<std::uint64_t>(n) * num + den - 1) / den;
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  return static_cast<std::size_t>(rank - 1);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error("read failed: " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  constexpr std::string_view kWs = " \t\r\n";
  auto b = s.find_first_not_of(kWs);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(kWs);
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace modtriage
