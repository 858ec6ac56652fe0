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

#ifndef MODTRIAGE_CONFUSION_HPP_
#define MODTRIAGE_CONFUSION_HPP_

#include <cstddef>

namespace modtriage {

// Binary confusion counts with critical as the positive class.
struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

// 2tp / (2tp + fp + fn), 0 when the denominator is 0.
inline double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  std::size_t den = 2 * tp + fp + fn;
  return den == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(den);
}

inline double f1_critical(const Confusion& c) { return f1_score(c.tp, c.fp, c.fn); }
// The normal class sees tn as its true positives.
inline double f1_normal(const Confusion& c) { return f1_score(c.tn, c.fn, c.fp); }
inline double macro_f1(const Confusion& c) {
  return (f1_critical(c) + f1_normal(c)) / 2.0;
}

}  // namespace modtriage

#endif  // MODTRIAGE_CONFUSION_HPP_
