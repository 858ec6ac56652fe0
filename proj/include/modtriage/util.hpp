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

#ifndef MODTRIAGE_UTIL_HPP_
#define MODTRIAGE_UTIL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace modtriage {

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

// 0-based index of the nearest-rank percentile num/den (e.g. 25/100) in a
// sorted sample of size n: rank = ceil(n * num / den), clamped to [1, n].
// Integer arithmetic only, so results never depend on floating rounding.
std::size_t nearest_rank_index(std::size_t n, std::uint64_t num,
                               std::uint64_t den);

template <typename T>
T nearest_rank(std::span<const T> sorted, std::uint64_t num,
               std::uint64_t den) {
  return sorted[nearest_rank_index(sorted.size(), num, den)];
}

std::string read_file(const std::filesystem::path& path);

// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

std::vector<std::string_view> split(std::string_view s, char sep);

std::string_view trim(std::string_view s);

// Shortest round-trippable decimal rendering, stable across runs.
std::string format_double(double v);

}  // namespace modtriage

#endif  // MODTRIAGE_UTIL_HPP_
