// Copyright 2026 The ATFuse Authors. All Rights Reserved.
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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

// Flat `section.key = value` settings text, used by run configs, the
// checkpoint header and the config sidecars.
namespace atfuse {

using Settings = std::map<std::string, std::string>;

// Blank lines and lines starting with '#' are ignored. Duplicate keys: the
// last one wins.
Settings parse_settings(const std::string& text);
Settings read_settings(const std::filesystem::path& path);
std::string format_settings(const Settings& settings);
void write_settings(const Settings& settings, const std::filesystem::path& path);

// `KEY=VALUE` as given on the command line.
std::pair<std::string, std::string> split_assignment(const std::string& arg);

namespace setting {

std::size_t to_size(const std::string& key, const std::string& value);
std::uint64_t to_u64(const std::string& key, const std::string& value);
double to_double(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);
std::vector<std::size_t> to_size_list(const std::string& key, const std::string& value);

// Shortest text that parses back to the same double.
std::string format_double(double v);
std::string format_size_list(const std::vector<std::size_t>& values);

}  // namespace setting

}  // namespace atfuse
