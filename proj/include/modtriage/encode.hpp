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

#ifndef MODTRIAGE_ENCODE_HPP_
#define MODTRIAGE_ENCODE_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modtriage/common.hpp"
#include "modtriage/ingest.hpp"

namespace modtriage {

// Train-fitted discretization edges. LEN has 3 edges (buckets B1..B4), IAT
// has 4 edges (buckets B0..B4). Frozen once serialized.
struct BinBoundaries {
  std::vector<std::int64_t> len_edges;
  std::vector<std::int64_t> iat_edges;
  std::string fit_split_id;
  std::int64_t version = 1;
  // Columns accepted with non-strict edges under the degenerate policy.
  std::vector<std::string> degenerate_columns;

  friend bool operator==(const BinBoundaries&, const BinBoundaries&) = default;
};

inline constexpr std::array<std::uint64_t, 3> kLenPercentiles{25, 50, 75};
inline constexpr std::array<std::uint64_t, 4> kIatPercentiles{20, 40, 60, 80};

struct FitOptions {
  std::string fit_split_id;
  std::int64_t version = 1;
  // Accept constant/tied columns (non-strict edges) with a warning instead of
  // failing.
  bool allow_degenerate = false;
};

struct FitResult {
  BinBoundaries bins;
  Warnings warnings;
};

// Nearest-rank percentiles over the observed (present) LEN and IAT values.
// Throws FitError naming the column when it is empty or degenerate.
FitResult fit_bins(std::span<const Frame> train_frames,
                   const FitOptions& options = {});

// Bucket index i such that value lies in (edges[i-1], edges[i]]; values at or
// below edges[0] go to 0, values above the last edge clip to edges.size().
// NaN yields nullopt.
std::optional<int> bucketize(double value, std::span<const std::int64_t> edges);

std::string bins_to_json(const BinBoundaries& bins);
BinBoundaries bins_from_json(std::string_view text);
// SHA-256 of the canonical serialization.
std::string bins_checksum(const BinBoundaries& bins);

enum class Field { kDir = 0, kFc, kUnit, kLen, kIat, kEx };
inline constexpr std::size_t kFieldCount = 6;

std::string_view field_name(Field f);

// One `NAME:VALUE` token with its parsed value. `value` is nullopt for NA;
// for DIR it holds 0 (C2S) or 1 (S2C), for LEN/IAT the bucket number.
struct Token {
  Field field = Field::kDir;
  std::optional<int> value;
  std::string text;

  friend bool operator==(const Token&, const Token&) = default;
};

struct TokenString {
  std::string text;
  std::array<std::string, kFieldCount> tokens;
};

// Renders a single canonical token.
std::string render_token(Field field, std::optional<int> value);

// Parses a single token, accepting non-canonical decimal widths (e.g. FC:003).
std::optional<Token> parse_token(std::string_view text);

// Parses a possibly partial token sequence: fields must appear in schema
// order without repeats, separated by single spaces. Empty text is an empty
// fragment.
std::optional<std::vector<Token>> parse_fragment(std::string_view text);

// Full six-token grammar check and split.
std::optional<TokenString> parse_token_string(std::string_view text);

inline bool is_full_grammar(std::string_view text) {
  return parse_token_string(text).has_value();
}

TokenString encode_token_string(const Frame& frame, const BinBoundaries& bins);

// Numeric features from the same parse. Absent values are -1.
struct NumericView {
  int function_code = -1;
  int len_bucket = -1;
  int iat_bucket = -1;
  int exception_code = -1;
  int direction = 0;  // 0 = C2S, 1 = S2C
  int unit_id = -1;

  std::array<double, 6> as_array() const {
    return {double(function_code), double(len_bucket), double(iat_bucket),
            double(exception_code), double(direction),  double(unit_id)};
  }

  friend bool operator==(const NumericView&, const NumericView&) = default;
};

NumericView encode_numeric(const Frame& frame, const BinBoundaries& bins);

// Numeric view recovered from token text (fragments allowed; missing fields
// become -1). Used by back ends that score token strings numerically.
NumericView numeric_from_tokens(std::span<const Token> tokens);

}  // namespace modtriage

#endif  // MODTRIAGE_ENCODE_HPP_
