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

#include "refgame/config.hpp"

#include <algorithm>
#include <array>

#include <openssl/evp.h>

#include "refgame/errors.hpp"
#include "refgame/jsonl.hpp"

namespace refgame::config {
namespace {

// Values replaced wholesale rather than merged key by key.
bool is_opaque(const std::string& path) {
  static const std::array<std::string_view, 5> kOpaque = {"speaker", "listener", "demo", "agents", "descriptions"};
  const auto leaf = path.substr(path.rfind('.') == std::string::npos ? 0 : path.rfind('.') + 1);
  return std::find(kOpaque.begin(), kOpaque.end(), leaf) != kOpaque.end();
}

// Output locations and execution knobs do not change artifact content and
// stay out of the hash.
bool is_output_key(const std::string& key) {
  return key == "out" || key == "out_dir" || key == "csv" || key == "audit_log" || key == "parallelism" ||
         key == "max_inflight";
}

Json to_canonical(const Json& j) { return nlohmann::json::parse(j.dump()); }  // sorted keys

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> kSubs = {"sample-contexts", "simulate", "build-prefs",
                                                 "analyze",         "serve",    "export-study"};
  return kSubs;
}

Json defaults_for(std::string_view sub) {
  if (sub == "sample-contexts") {
    return {{"embeddings", ""},
            {"out", "contexts.json"},
            {"k", 4},
            {"temps", {0.01, 0.02, 0.03, 0.04, 0.05}},
            {"per_temp", 100},
            {"seed", 0}};
  }
  if (sub == "simulate") {
    return {{"contexts", ""},
            {"out_dir", "run"},
            {"n", 4},
            {"trials", 20},
            {"games_per_context", 1},
            {"max_contexts", 0},
            {"policy", "uniform"},
            {"seed", 0},
            {"parallelism", 1},
            {"max_inflight", 8},
            {"decoding", {{"temperature", 1.0}, {"top_p", 0.95}, {"max_tokens", 64}}},
            {"speaker", {{"kind", "convention"}, {"synthetic_seed", 0}}},
            {"listener", {{"kind", "adaptive"}, {"synthetic_seed", 0}}},
            {"audit_log", ""}};
  }
  if (sub == "build-prefs") {
    return {{"logs", ""},
            {"samples", ""},
            {"out", "prefs.jsonl"},
            {"condition", "success+cost"},
            {"demo", nullptr},
            {"end_marker", "<EOM>"}};
  }
  if (sub == "analyze") {
    return {{"logs", ""},
            {"out", "report.json"},
            {"csv", ""},
            {"wnr_denominator", "content"},
            {"lexicon", ""},
            {"tagger_command", ""},
            {"late_blocks", 2},
            {"gmm_k_max", 4},
            {"gmm_seeds", 5},
            {"consistency_threshold", 2.0},
            {"group_by", "meta.speaker_kind"},
            {"include_incomplete", false}};
  }
  if (sub == "serve") {
    return {{"host", "127.0.0.1"},
            {"port", 8080},
            {"ws_port", 8081},
            {"event_log", "study_events.jsonl"},
            {"contexts", ""},
            {"seed", 0},
            {"trials_per_game", 20},
            {"rt_cap_ms", 600000},
            {"treatment_probability", 0.5},
            {"colors", {{"treatment_model", "blue"}, {"baseline_model_1", "green"}, {"baseline_model_2", "orange"}}},
            {"agents", nullptr},
            {"max_inflight", 8}};
  }
  if (sub == "export-study") {
    return {{"event_log", "study_events.jsonl"}, {"out_dir", "study_export"}, {"include_incomplete", false}};
  }
  throw InputError("unknown subcommand '" + std::string(sub) + "'");
}

void merge_strict(Json& base, const Json& overlay, const std::string& path) {
  if (!overlay.is_object()) throw InputError("config section '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    auto it = base.find(key);
    if (it == base.end()) throw InputError("unknown config key '" + full + "'");
    if (it->is_object() && value.is_object() && !is_opaque(full)) {
      merge_strict(*it, value, full);
    } else {
      *it = value;
    }
  }
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

std::string RunConfig::hash() const {
  Json hashed = values;
  for (auto it = hashed.begin(); it != hashed.end();) {
    if (is_output_key(it.key())) {
      it = hashed.erase(it);
    } else {
      ++it;
    }
  }
  return sha256_hex(subcommand + "\n" + to_canonical(hashed).dump());
}

Json RunConfig::effective() const {
  Json j = values;
  j["config_hash"] = hash();
  return j;
}

const Json& RunConfig::at(std::string_view key) const {
  auto it = values.find(std::string(key));
  if (it == values.end()) throw InputError("missing config key '" + std::string(key) + "'");
  return *it;
}

RunConfig load_run_config(std::string_view subcommand, const std::optional<std::string>& file, const Json& overrides) {
  RunConfig rc{std::string(subcommand), defaults_for(subcommand)};
  if (file) {
    Json j;
    try {
      j = Json::parse(read_file(*file));
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError("config file '" + *file + "': " + e.what());
    }
    if (j.is_object() && j.size() == 1 && j.contains(std::string(subcommand))) j = j.at(std::string(subcommand));
    merge_strict(rc.values, j);
  }
  if (!overrides.is_null()) merge_strict(rc.values, overrides);
  return rc;
}

}  // namespace refgame::config
