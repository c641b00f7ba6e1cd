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

#ifndef CLOG_CONFIG_HPP
#define CLOG_CONFIG_HPP

#include <string>

#include "clog/domain.hpp"

namespace clog {

/// Parses a RunConfig from JSON text. Unknown keys are rejected so that
/// typos never silently fall back to defaults.
RunConfig parse_run_config(const std::string& json_text);

/// Reads and parses a config file.
RunConfig load_run_config(const std::string& path);

/// Canonical JSON form (sorted keys, 2-space indent); round-trips through
/// parse_run_config.
std::string run_config_to_json(const RunConfig& config);

}  // namespace clog

#endif  // CLOG_CONFIG_HPP
