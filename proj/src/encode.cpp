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

#include "modtriage/encode.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "json.hpp"
#include "modtriage/util.hpp"

namespace modtriage {

namespace {

template <std::size_t N>
std::vector<std::int64_t> percentile_edges(
    std::vector<std::int64_t> values,
    const std::array<std::uint64_t, N>& percents) {
  std::vector<std::int64_t> edges;
  edges.reserve(N);
  for (auto p : percents) {
    auto idx = nearest_rank_index(values.size(), p, 100);
    std::nth_element(values.begin(),
                     values.begin() + static_cast<std::ptrdiff_t>(idx),
                     values.end());
    edges.push_back(values[idx]);
  }
  return edges;
}

bool strictly_ascending(std::span<const std::int64_t> v) {
  return std::adjacent_find(v.begin(), v.end(), [](auto a, auto b) {
           return a >= b;
         }) == v.end();
}

bool nondecreasing(std::span<const std::int64_t> v) {
  return std::is_sorted(v.begin(), v.end());
}

std::string edges_str(std::span<const std::int64_t> v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(v[i]);
  }
  return s + "]";
}

std::optional<int> parse_small_uint(std::string_view s, std::size_t max_digits,
                                    int max_value) {
  if (s.empty() || s.size() > max_digits) return std::nullopt;
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v < 0 || v > max_value) {
    return std::nullopt;
  }
  return v;
}

constexpr std::array<std::string_view, kFieldCount> kFieldNames{
    "DIR", "FC", "UNIT", "LEN", "IAT", "EX"};

}  // namespace

FitResult fit_bins(std::span<const Frame> train_frames,
                   const FitOptions& options) {
  if (train_frames.empty()) {
    throw FitError("fit_bins: training split is empty");
  }
  std::vector<std::int64_t> lens;
  std::vector<std::int64_t> iats;
  for (const auto& f : train_frames) {
    if (f.payload_len_bytes) lens.push_back(*f.payload_len_bytes);
    if (f.iat_us) iats.push_back(*f.iat_us);
  }
  if (lens.empty()) {
    throw FitError("fit_bins: column LEN has no observed values");
  }
  if (iats.empty()) {
    throw FitError("fit_bins: column IAT has no observed values");
  }

  FitResult out;
  out.bins.fit_split_id = options.fit_split_id;
  out.bins.version = options.version;
  out.bins.len_edges = percentile_edges(std::move(lens), kLenPercentiles);
  out.bins.iat_edges = percentile_edges(std::move(iats), kIatPercentiles);

  auto check = [&](std::string_view column,
                   const std::vector<std::int64_t>& edges) {
    if (strictly_ascending(edges)) return;
    if (!options.allow_degenerate) {
      throw FitError("fit_bins: column " + std::string(column) +
                     " is degenerate, edges " + edges_str(edges) +
                     " are not strictly ascending");
    }
    out.bins.degenerate_columns.emplace_back(column);
    out.warnings.push_back("fit_bins: column " + std::string(column) +
                           " degenerate, edges " + edges_str(edges) +
                           " collapse tied buckets");
  };
  check("LEN", out.bins.len_edges);
  check("IAT", out.bins.iat_edges);
  return out;
}

std::optional<int> bucketize(double value,
                             std::span<const std::int64_t> edges) {
  if (std::isnan(value)) return std::nullopt;
  auto it = std::find_if(edges.begin(), edges.end(), [value](std::int64_t e) {
    return value <= static_cast<double>(e);
  });
  return static_cast<int>(it - edges.begin());
}

std::string bins_to_json(const BinBoundaries& bins) {
  nlohmann::ordered_json j;
  j["version"] = bins.version;
  j["fit_split_id"] = bins.fit_split_id;
  j["len_edges"] = bins.len_edges;
  j["iat_edges"] = bins.iat_edges;
  j["degenerate_columns"] = bins.degenerate_columns;
  return j.dump(2) + "\n";
}

BinBoundaries bins_from_json(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (!j.is_object()) throw FitError("bins.json: not a JSON object");
  BinBoundaries b;
  try {
    b.version = j.at("version").get<std::int64_t>();
    b.fit_split_id = j.at("fit_split_id").get<std::string>();
    b.len_edges = j.at("len_edges").get<std::vector<std::int64_t>>();
    b.iat_edges = j.at("iat_edges").get<std::vector<std::int64_t>>();
    if (j.contains("degenerate_columns")) {
      b.degenerate_columns =
          j["degenerate_columns"].get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FitError(std::string("bins.json: ") + e.what());
  }
  if (b.len_edges.size() != kLenPercentiles.size() ||
      b.iat_edges.size() != kIatPercentiles.size()) {
    throw FitError("bins.json: expected 3 LEN edges and 4 IAT edges");
  }
  auto degenerate = [&](std::string_view c) {
    return std::find(b.degenerate_columns.begin(), b.degenerate_columns.end(),
                     c) != b.degenerate_columns.end();
  };
  if (!(degenerate("LEN") ? nondecreasing(b.len_edges)
                          : strictly_ascending(b.len_edges)) ||
      !(degenerate("IAT") ? nondecreasing(b.iat_edges)
                          : strictly_ascending(b.iat_edges))) {
    throw FitError("bins.json: edges are not ascending");
  }
  return b;
}

std::string bins_checksum(const BinBoundaries& bins) {
  return sha256_hex(bins_to_json(bins));
}

std::string_view field_name(Field f) {
  return kFieldNames[static_cast<std::size_t>(f)];
}

std::string render_token(Field field, std::optional<int> value) {
  std::string out(field_name(field));
  out += ':';
  if (!value) {
    if (field == Field::kDir) {
      throw PreconditionError("render_token: DIR cannot be NA");
    }
    return out + "NA";
  }
  int v = *value;
  switch (field) {
    case Field::kDir:
      out += v == 0 ? "C2S" : "S2C";
      break;
    case Field::kFc:
      if (v < 10) out += '0';
      out += std::to_string(v);
      break;
    case Field::kUnit:
      out += 'U';
      out += std::to_string(v);
      break;
    case Field::kLen:
    case Field::kIat:
      out += 'B';
      out += std::to_string(v);
      break;
    case Field::kEx:
      out += std::to_string(v);
      break;
  }
  return out;
}

std::optional<Token> parse_token(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto name = text.substr(0, colon);
  auto value = text.substr(colon + 1);
  auto it = std::find(kFieldNames.begin(), kFieldNames.end(), name);
  if (it == kFieldNames.end()) return std::nullopt;
  Token tok;
  tok.field = static_cast<Field>(it - kFieldNames.begin());
  tok.text = std::string(text);
  if (tok.field == Field::kDir) {
    auto dir = parse_direction(value);
    if (!dir) return std::nullopt;
    tok.value = *dir == Direction::kClientToServer ? 0 : 1;
    return tok;
  }
  if (value == "NA") return tok;
  std::optional<int> v;
  switch (tok.field) {
    case Field::kFc:
    case Field::kEx:
      v = parse_small_uint(value, 3, 255);
      break;
    case Field::kUnit:
      if (!value.empty() && value.front() == 'U') {
        v = parse_small_uint(value.substr(1), 3, 255);
      }
      break;
    case Field::kLen:
      if (value.size() == 2 && value[0] == 'B' && value[1] >= '1' &&
          value[1] <= '4') {
        v = value[1] - '0';
      }
      break;
    case Field::kIat:
      if (value.size() == 2 && value[0] == 'B' && value[1] >= '0' &&
          value[1] <= '4') {
        v = value[1] - '0';
      }
      break;
    case Field::kDir:
      break;
  }
  if (!v) return std::nullopt;
  tok.value = v;
  return tok;
}

std::optional<std::vector<Token>> parse_fragment(std::string_view text) {
  std::vector<Token> out;
  if (text.empty()) return out;
  int last_field = -1;
  for (auto part : split(text, ' ')) {
    auto tok = parse_token(part);
    if (!tok) return std::nullopt;
    int idx = static_cast<int>(tok->field);
    if (idx <= last_field) return std::nullopt;
    last_field = idx;
    out.push_back(std::move(*tok));
  }
  return out;
}

std::optional<TokenString> parse_token_string(std::string_view text) {
  auto frag = parse_fragment(text);
  if (!frag || frag->size() != kFieldCount) return std::nullopt;
  TokenString ts;
  ts.text = std::string(text);
  for (std::size_t i = 0; i < kFieldCount; ++i) ts.tokens[i] = (*frag)[i].text;
  return ts;
}

namespace {

template <typename T>
std::optional<int> opt_int(const std::optional<T>& v) {
  return v ? std::optional<int>(static_cast<int>(*v)) : std::nullopt;
}

std::optional<int> len_bucket(const Frame& f, const BinBoundaries& bins) {
  if (!f.payload_len_bytes) return std::nullopt;
  auto b = bucketize(static_cast<double>(*f.payload_len_bytes), bins.len_edges);
  return b ? std::optional<int>(*b + 1) : std::nullopt;  // LEN starts at B1
}

std::optional<int> iat_bucket(const Frame& f, const BinBoundaries& bins) {
  if (!f.iat_us) return std::nullopt;
  return bucketize(static_cast<double>(*f.iat_us), bins.iat_edges);
}

}  // namespace

TokenString encode_token_string(const Frame& frame, const BinBoundaries& bins) {
  TokenString ts;
  ts.tokens[0] = render_token(
      Field::kDir, frame.direction == Direction::kClientToServer ? 0 : 1);
  ts.tokens[1] = render_token(Field::kFc, opt_int(frame.function_code));
  ts.tokens[2] = render_token(Field::kUnit, opt_int(frame.unit_id));
  ts.tokens[3] = render_token(Field::kLen, len_bucket(frame, bins));
  ts.tokens[4] = render_token(Field::kIat, iat_bucket(frame, bins));
  ts.tokens[5] = render_token(Field::kEx, opt_int(frame.exception_code));
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    if (i) ts.text += ' ';
    ts.text += ts.tokens[i];
  }
  return ts;
}

NumericView encode_numeric(const Frame& frame, const BinBoundaries& bins) {
  NumericView v;
  v.function_code = opt_int(frame.function_code).value_or(-1);
  v.len_bucket = len_bucket(frame, bins).value_or(-1);
  v.iat_bucket = iat_bucket(frame, bins).value_or(-1);
  v.exception_code = opt_int(frame.exception_code).value_or(-1);
  v.direction = frame.direction == Direction::kClientToServer ? 0 : 1;
  v.unit_id = opt_int(frame.unit_id).value_or(-1);
  return v;
}

NumericView numeric_from_tokens(std::span<const Token> tokens) {
  NumericView v;
  v.direction = -1;
  for (const auto& t : tokens) {
    int x = t.value.value_or(-1);
    switch (t.field) {
      case Field::kDir: v.direction = x; break;
      case Field::kFc: v.function_code = x; break;
      case Field::kUnit: v.unit_id = x; break;
      case Field::kLen: v.len_bucket = x; break;
      case Field::kIat: v.iat_bucket = x; break;
      case Field::kEx: v.exception_code = x; break;
    }
  }
  return v;
}

}  // namespace modtriage
