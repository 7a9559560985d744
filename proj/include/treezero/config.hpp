// Copyright 2026 The TreeZero Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// JSON run configuration. Unknown keys are rejected with their full dotted
// path; missing keys keep their defaults.

#ifndef TREEZERO_CONFIG_HPP_
#define TREEZERO_CONFIG_HPP_

#include <string>

#include "json.hpp"
#include "treezero/loop.hpp"

namespace tz {

inline constexpr int kConfigSchema = 1;

nlohmann::json config_to_json(const RunConfig& cfg);
// Throws ConfigError naming the offending key.
RunConfig config_from_json(const nlohmann::json& j);

std::string serialize_config(const RunConfig& cfg);
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Applies "dotted.key=value". The value is read as JSON when it parses
// (numbers, booleans, arrays) and as a string otherwise.
RunConfig apply_override(const RunConfig& cfg, const std::string& assignment);

}  // namespace tz

#endif  // TREEZERO_CONFIG_HPP_
