// Copyright 2026 The clog-bench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CLOG_ERRORS_HPP
#define CLOG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace clog {

/// Invalid user input: bad config values, malformed files, unknown ids.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Dataset files missing or unreadable.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Internal invariant violated; indicates a bug, not user error.
class InvariantError : public std::logic_error {
 public:
  explicit InvariantError(const std::string& what) : std::logic_error(what) {}
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ConfigError(what);
}

inline void check_invariant(bool condition, const std::string& what) {
  if (!condition) throw InvariantError(what);
}

}  // namespace clog

#endif  // CLOG_ERRORS_HPP
