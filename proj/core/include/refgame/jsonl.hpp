// Copyright 2026 The refgame Authors. All Rights Reserved.
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

#include <functional>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

namespace refgame {

using Json = nlohmann::ordered_json;

// Calls fn for every non-blank line parsed as JSON. Parse failures throw
// InputError carrying the 1-based line number.
void for_each_jsonl(std::istream& in, const std::function<void(const Json&, std::size_t line)>& fn);

void write_jsonl_line(std::ostream& out, const Json& j);

// Opens path for reading/writing; throws InputError when that fails.
std::ifstream open_input(const std::string& path);
std::ofstream open_output(const std::string& path);

std::string read_file(const std::string& path);

}  // namespace refgame
