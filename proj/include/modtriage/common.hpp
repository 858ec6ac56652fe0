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

#ifndef MODTRIAGE_COMMON_HPP_
#define MODTRIAGE_COMMON_HPP_

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace modtriage {

// Base of every error thrown by the library. Fatal conditions only; anything
// the pipeline can survive is reported through a warnings list instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

// Raised when an operation would let non-train data influence a fitted
// artifact, or when a frozen artifact does not belong to the current split.
class LeakageError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class MetricsError : public Error {
 public:
  using Error::Error;
};

enum class Direction { kClientToServer, kServerToClient };

enum class Label { kNormal, kCritical };

std::string_view to_string(Direction d);
std::string_view to_string(Label l);

std::optional<Direction> parse_direction(std::string_view s);
std::optional<Label> parse_label(std::string_view s);

using Warnings = std::vector<std::string>;

}  // namespace modtriage

#endif  // MODTRIAGE_COMMON_HPP_
