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

// Run configuration: per-subcommand defaults, overlaid by a JSON config file
// and then by command-line flags. Unknown keys are rejected at every level.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refgame/game.hpp"

namespace refgame::config {

// Subcommands with a configuration section.
const std::vector<std::string>& subcommands();

// Defaults for a subcommand; throws InputError for an unknown one.
Json defaults_for(std::string_view subcommand);

// Overlays values onto base. Nested objects merge key by key; keys missing
// from base raise InputError naming the dotted path. Agent specs (speaker,
// listener, demo, agents.*) are replaced wholesale and validated where used.
void merge_strict(Json& base, const Json& overlay, const std::string& path = "");

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

struct RunConfig {
  std::string subcommand;
  Json values;

  // SHA-256 over the canonical (sorted-key, compact) dump of every value
  // except output locations and execution knobs (parallelism, max_inflight),
  // so reruns into another directory share a hash.
  std::string hash() const;
  // values plus {"config_hash": ...}.
  Json effective() const;

  const Json& at(std::string_view key) const;
};

// defaults <- file (when given) <- overrides. The file may hold the section
// directly or a {"<subcommand>": {...}} wrapper.
RunConfig load_run_config(std::string_view subcommand, const std::optional<std::string>& file, const Json& overrides);

}  // namespace refgame::config
