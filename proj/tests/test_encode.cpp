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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "modtriage/encode.hpp"
#include "support.hpp"

using namespace modtriage;
using modtriage::testing::fixture_bins;
using modtriage::testing::make_frame;

namespace {

std::int64_t oracle_rank(std::vector<std::int64_t> v, std::uint64_t pct) {
  std::sort(v.begin(), v.end());
  // smallest rank r with r * 100 >= n * pct
  std::size_t r = 1;
  while (r * 100 < v.size() * pct) ++r;
  return v[r - 1];
}

std::vector<Frame> frames_with(const std::vector<std::int64_t>& lens,
                               const std::vector<std::int64_t>& iats) {
  std::vector<Frame> out;
  for (std::size_t i = 0; i < std::max(lens.size(), iats.size()); ++i) {
    auto f = make_frame(static_cast<std::int64_t>(i), Direction::kClientToServer,
                        3, 1, 0, std::nullopt, 0);
    f.payload_len_bytes.reset();
    if (i < lens.size()) f.payload_len_bytes = static_cast<std::uint32_t>(lens[i]);
    if (i < iats.size()) f.iat_us = iats[i];
    out.push_back(f);
  }
  return out;
}

}  // namespace

TEST_SUITE("encode") {

TEST_CASE("golden token string for the reference read poll") {
  auto f = make_frame(0, Direction::kClientToServer, 3, 1, 14, 87000, 0);
  auto ts = encode_token_string(f, fixture_bins());
  CHECK(ts.text == "DIR:C2S FC:03 UNIT:U1 LEN:B2 IAT:B4 EX:0");
  auto nv = encode_numeric(f, fixture_bins());
  CHECK(nv.len_bucket == 2);
  CHECK(nv.iat_bucket == 4);
  CHECK(nv.function_code == 3);
  CHECK(nv.exception_code == 0);
  CHECK(nv.direction == 0);
}

TEST_CASE("three-digit function code and low buckets") {
  auto f = make_frame(0, Direction::kServerToClient, 131, 2, 5, 500, 2);
  auto ts = encode_token_string(f, fixture_bins());
  CHECK(ts.text == "DIR:S2C FC:131 UNIT:U2 LEN:B1 IAT:B0 EX:2");
  CHECK(is_full_grammar(ts.text));
}

TEST_CASE("absent fields render as NA") {
  auto f = make_frame(0, Direction::kClientToServer, 3, 1, 14, std::nullopt, 0);
  CHECK(encode_token_string(f, fixture_bins()).text ==
        "DIR:C2S FC:03 UNIT:U1 LEN:B2 IAT:NA EX:0");
  f.unit_id.reset();
  f.function_code.reset();
  f.exception_code.reset();
  f.payload_len_bytes.reset();
  CHECK(encode_token_string(f, fixture_bins()).text ==
        "DIR:C2S FC:NA UNIT:NA LEN:NA IAT:NA EX:NA");
  auto nv = encode_numeric(f, fixture_bins());
  CHECK(nv.unit_id == -1);
  CHECK(nv.len_bucket == -1);
}

TEST_CASE("bucketize ties, clipping and NaN") {
  const std::vector<std::int64_t> edges{10, 20, 40};
  CHECK(bucketize(14, edges) == 1);
  CHECK(bucketize(10, edges) == 0);
  CHECK(bucketize(0, edges) == 0);
  CHECK(bucketize(20, edges) == 1);
  CHECK(bucketize(21, edges) == 2);
  CHECK(bucketize(1e9, edges) == 3);
  CHECK_FALSE(bucketize(std::numeric_limits<double>::quiet_NaN(), edges).has_value());
  int prev = 0;
  for (int v = 0; v < 100; ++v) {
    int b = *bucketize(v, edges);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("fit_bins nearest-rank examples") {
  std::vector<std::int64_t> lens;
  for (int i = 1; i <= 100; ++i) lens.push_back(i);
  auto r = fit_bins(frames_with(lens, {10, 20, 30, 40, 50}));
  CHECK(r.bins.len_edges == std::vector<std::int64_t>{25, 50, 75});
  CHECK(r.bins.iat_edges == std::vector<std::int64_t>{10, 20, 30, 40});
}

TEST_CASE("fit_bins matches a sort-based oracle") {
  std::mt19937_64 rng(3);
  for (int round = 0; round < 30; ++round) {
    std::vector<std::int64_t> lens, iats;
    auto n = 5 + rng() % 100;
    for (std::size_t i = 0; i < n; ++i) {
      lens.push_back(static_cast<std::int64_t>(rng() % 1000));
      iats.push_back(static_cast<std::int64_t>(rng() % 1000000));
    }
    FitOptions opts;
    opts.allow_degenerate = true;
    auto r = fit_bins(frames_with(lens, iats), opts);
    CHECK(r.bins.len_edges == std::vector<std::int64_t>{
                                  oracle_rank(lens, 25), oracle_rank(lens, 50),
                                  oracle_rank(lens, 75)});
    CHECK(r.bins.iat_edges == std::vector<std::int64_t>{
                                  oracle_rank(iats, 20), oracle_rank(iats, 40),
                                  oracle_rank(iats, 60), oracle_rank(iats, 80)});
  }
}

TEST_CASE("fit_bins errors name the column") {
  CHECK_THROWS_AS(fit_bins(std::vector<Frame>{}), FitError);
  try {
    fit_bins(frames_with({}, {1, 2, 3, 4, 5}));
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(std::string(e.what()).find("LEN") != std::string::npos);
  }
  try {
    fit_bins(frames_with({7, 7, 7, 7}, {1, 2, 3, 4, 5}));
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(std::string(e.what()).find("LEN") != std::string::npos);
  }
  FitOptions opts;
  opts.allow_degenerate = true;
  auto r = fit_bins(frames_with({7, 7, 7, 7}, {1, 2, 3, 4, 5}), opts);
  CHECK(r.bins.degenerate_columns == std::vector<std::string>{"LEN"});
  CHECK(r.warnings.size() == 1);
}

TEST_CASE("token grammar") {
  CHECK(render_token(Field::kFc, 3) == "FC:03");
  CHECK(render_token(Field::kFc, 129) == "FC:129");
  CHECK(render_token(Field::kUnit, 7) == "UNIT:U7");
  CHECK(render_token(Field::kIat, std::nullopt) == "IAT:NA");
  auto t = parse_token("FC:003");
  REQUIRE(t);
  CHECK(t->field == Field::kFc);
  CHECK(t->value == 3);
  CHECK_FALSE(parse_token("FC:").has_value());
  CHECK_FALSE(parse_token("LEN:B7").has_value());

  CHECK(parse_fragment("")->empty());
  CHECK(parse_fragment("FC:06 EX:0")->size() == 2);
  CHECK_FALSE(parse_fragment("EX:0 FC:06").has_value());
  CHECK_FALSE(parse_fragment("FC:06  EX:0").has_value());
  CHECK_FALSE(is_full_grammar("DIR:C2S FC:03 UNIT:U1 LEN:B2 IAT:B4"));
}

TEST_CASE("random frames round-trip and keep view parity") {
  std::mt19937_64 rng(5);
  auto bins = fixture_bins();
  const auto before = bins_checksum(bins);
  for (int i = 0; i < 500; ++i) {
    auto f = make_frame(i, rng() % 2 ? Direction::kClientToServer : Direction::kServerToClient,
                        static_cast<int>(rng() % 256), static_cast<int>(rng() % 256),
                        static_cast<std::uint32_t>(rng() % 80),
                        static_cast<std::int64_t>(rng() % 100000),
                        static_cast<int>(rng() % 12));
    if (rng() % 5 == 0) f.iat_us.reset();
    if (rng() % 7 == 0) f.unit_id.reset();
    auto ts = encode_token_string(f, bins);
    auto parsed = parse_token_string(ts.text);
    REQUIRE(parsed);
    CHECK(parsed->text == ts.text);
    CHECK(parsed->tokens == ts.tokens);

    auto nv = encode_numeric(f, bins);
    auto toks = parse_fragment(ts.text);
    REQUIRE(toks);
    CHECK(numeric_from_tokens(*toks) == nv);
    if (f.payload_len_bytes) {
      CHECK(nv.len_bucket == *bucketize(*f.payload_len_bytes, bins.len_edges) + 1);
    }
    if (f.iat_us) {
      CHECK(nv.iat_bucket == *bucketize(static_cast<double>(*f.iat_us), bins.iat_edges));
    }
  }
  CHECK(bins_checksum(bins) == before);
}

TEST_CASE("bins serialization") {
  auto bins = fixture_bins();
  auto text = bins_to_json(bins);
  CHECK(bins_from_json(text) == bins);
  CHECK(bins_checksum(bins_from_json(text)) == bins_checksum(bins));
  CHECK_THROWS_AS(bins_from_json("{\"len_edges\":[3,2,1]}"), FitError);
}

}  // TEST_SUITE
