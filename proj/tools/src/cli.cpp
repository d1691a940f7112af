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

#include "refgame/cli.hpp"

#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "refgame/errors.hpp"
#include "refgame/jsonl.hpp"

namespace refgame::cli {
namespace {

enum class Kind { Str, Int, Num, Bool, NumList, JsonValue };

struct Flag {
  std::string name;  // kebab-case, without dashes
  std::string key;   // dotted config path
  Kind kind;
  std::string help;
};

const std::map<std::string, std::vector<Flag>>& flag_table() {
  static const std::map<std::string, std::vector<Flag>> kTable = {
      {"sample-contexts",
       {{"embeddings", "embeddings", Kind::Str, "Embedding JSONL: {id, vector, uri?} per line"},
        {"out", "out", Kind::Str, "Output context suite (JSON)"},
        {"k", "k", Kind::Int, "Images per context"},
        {"temps", "temps", Kind::NumList, "Comma-separated softmax temperatures"},
        {"per-temp", "per_temp", Kind::Int, "Contexts per temperature"},
        {"seed", "seed", Kind::Int, "Random seed"}}},
      {"simulate",
       {{"contexts", "contexts", Kind::Str, "Context suite (JSON)"},
        {"out-dir", "out_dir", Kind::Str, "Directory for logs.jsonl, samples.jsonl, manifest.json"},
        {"n", "n", Kind::Int, "Speaker samples per trial"},
        {"trials", "trials", Kind::Int, "Trials per game"},
        {"games-per-context", "games_per_context", Kind::Int, "Games per context"},
        {"max-contexts", "max_contexts", Kind::Int, "Use only the first N contexts (0: all)"},
        {"policy", "policy", Kind::Str, "uniform | prefer_success | greedy_shortest_success"},
        {"seed", "seed", Kind::Int, "Batch seed"},
        {"parallelism", "parallelism", Kind::Int, "Games simulated concurrently"},
        {"max-inflight", "max_inflight", Kind::Int, "Concurrent endpoint requests"},
        {"temperature", "decoding.temperature", Kind::Num, "Speaker sampling temperature"},
        {"top-p", "decoding.top_p", Kind::Num, "Speaker nucleus mass"},
        {"max-tokens", "decoding.max_tokens", Kind::Int, "Speaker max tokens"},
        {"speaker", "speaker", Kind::JsonValue, "Speaker spec (JSON or @file)"},
        {"listener", "listener", Kind::JsonValue, "Listener spec (JSON or @file)"},
        {"audit-log", "audit_log", Kind::Str, "JSONL mirror of endpoint traffic"}}},
      {"build-prefs",
       {{"logs", "logs", Kind::Str, "Game-log JSONL"},
        {"samples", "samples", Kind::Str, "Candidate-set JSONL"},
        {"out", "out", Kind::Str, "Preference JSONL"},
        {"condition", "condition", Kind::Str, "success+cost | success | cost"},
        {"demo", "demo", Kind::JsonValue, "Demonstration game for prompts (JSON or @file)"},
        {"end-marker", "end_marker", Kind::Str, "End-of-message marker in prompts"}}},
      {"analyze",
       {{"logs", "logs", Kind::Str, "Game-log JSONL"},
        {"out", "out", Kind::Str, "Report JSON"},
        {"csv", "csv", Kind::Str, "Optional per-repetition CSV"},
        {"wnr-denominator", "wnr_denominator", Kind::Str, "content | tokens"},
        {"lexicon", "lexicon", Kind::Str, "Tagger lexicon TSV (default: built in)"},
        {"tagger-command", "tagger_command", Kind::Str, "External JSONL tagger command"},
        {"late-blocks", "late_blocks", Kind::Int, "Blocks counted as late game"},
        {"gmm-k-max", "gmm_k_max", Kind::Int, "Largest mixture size tried"},
        {"gmm-seeds", "gmm_seeds", Kind::Int, "EM restarts per mixture size"},
        {"consistency-threshold", "consistency_threshold", Kind::Num, "Late-game WND threshold"},
        {"group-by", "group_by", Kind::Str, "Game field to group by (empty: none)"},
        {"include-incomplete", "include_incomplete", Kind::Bool, "Keep incomplete or failed games"}}},
      {"serve",
       {{"host", "host", Kind::Str, "Bind address"},
        {"port", "port", Kind::Int, "HTTP port"},
        {"ws-port", "ws_port", Kind::Int, "WebSocket port"},
        {"event-log", "event_log", Kind::Str, "Append-only event log"},
        {"contexts", "contexts", Kind::Str, "Context suite (JSON)"},
        {"seed", "seed", Kind::Int, "Randomization seed"},
        {"trials-per-game", "trials_per_game", Kind::Int, "Trials per game"},
        {"rt-cap-ms", "rt_cap_ms", Kind::Int, "Response-time sanity cap"},
        {"treatment-probability", "treatment_probability", Kind::Num, "Chance the first game is the treatment"},
        {"agents", "agents", Kind::JsonValue, "Speaker specs by kind (JSON or @file)"},
        {"max-inflight", "max_inflight", Kind::Int, "Concurrent endpoint requests"}}},
      {"export-study",
       {{"event-log", "event_log", Kind::Str, "Study event log"},
        {"out-dir", "out_dir", Kind::Str, "Export directory"},
        {"include-incomplete", "include_incomplete", Kind::Bool, "Keep incomplete sessions"}}},
  };
  return kTable;
}

Json parse_json_value(const std::string& raw, const std::string& flag) {
  std::string text = raw;
  if (!text.empty() && text.front() == '@') text = read_file(text.substr(1));
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("--" + flag + ": invalid JSON: " + e.what());
  }
}

Json convert(const Flag& f, const std::string& raw) {
  try {
    switch (f.kind) {
      case Kind::Str:
        return raw;
      case Kind::Int: {
        std::size_t pos = 0;
        const long long v = std::stoll(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        return v;
      }
      case Kind::Num: {
        std::size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        return v;
      }
      case Kind::Bool:
        return raw == "true" || raw == "1";
      case Kind::NumList: {
        Json arr = Json::array();
        std::stringstream ss(raw);
        for (std::string item; std::getline(ss, item, ',');) {
          if (item.empty()) continue;
          std::size_t pos = 0;
          arr.push_back(std::stod(item, &pos));
          if (pos != item.size()) throw std::invalid_argument(item);
        }
        return arr;
      }
      case Kind::JsonValue:
        return parse_json_value(raw, f.name);
    }
  } catch (const std::invalid_argument&) {
    throw InputError("--" + f.name + ": cannot parse '" + raw + "'");
  } catch (const std::out_of_range&) {
    throw InputError("--" + f.name + ": value out of range '" + raw + "'");
  }
  return nullptr;
}

void set_path(Json& root, const std::string& dotted, Json value) {
  Json* node = &root;
  std::stringstream ss(dotted);
  std::vector<std::string> parts;
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = Json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = std::move(value);
}

void setup_logging(const std::string& level) {
  static std::once_flag once;
  std::call_once(once, [] {
    auto logger = spdlog::stderr_color_mt("refgame");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%Y-%m-%dT%H:%M:%S.%eZ] [%l] %v", spdlog::pattern_time_type::utc);
  });
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Repeated reference game toolkit", "refgame"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_file;
  std::string log_level = "info";
  app.add_option("--config", config_file, "JSON config file; flags override its values");
  app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off");

  struct Bound {
    const Flag* flag;
    CLI::Option* option;
    std::string value;
    bool bool_value = false;
  };
  std::map<std::string, std::pair<CLI::App*, std::vector<std::unique_ptr<Bound>>>> subs;
  static const std::map<std::string, std::string> kDescriptions = {
      {"sample-contexts", "Sample image contexts by embedding similarity"},
      {"simulate", "Simulate repeated reference games between agents"},
      {"build-prefs", "Build preference pairs from simulated candidate sets"},
      {"analyze", "Compute convention metrics over game logs"},
      {"serve", "Run the human study server"},
      {"export-study", "Export study data from an event log"},
  };
  for (const auto& [name, flags] : flag_table()) {
    auto* sub = app.add_subcommand(name, kDescriptions.at(name));
    auto& entry = subs[name];
    entry.first = sub;
    for (const auto& f : flags) {
      auto b = std::make_unique<Bound>();
      b->flag = &f;
      if (f.kind == Kind::Bool) {
        b->option = sub->add_flag("--" + f.name, b->bool_value, f.help);
      } else {
        b->option = sub->add_option("--" + f.name, b->value, f.help);
      }
      entry.second.push_back(std::move(b));
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    setup_logging(log_level);
  } catch (const spdlog::spdlog_ex& e) {
    err << "bad --log-level: " << e.what() << '\n';
    return kInputError;
  }

  for (auto& [name, entry] : subs) {
    if (!entry.first->parsed()) continue;
    try {
      Json overrides = Json::object();
      for (const auto& b : entry.second) {
        if (b->option->count() == 0) continue;
        set_path(overrides, b->flag->key, b->flag->kind == Kind::Bool ? Json(b->bool_value) : convert(*b->flag, b->value));
      }
      const auto rc = config::load_run_config(
          name, config_file.empty() ? std::nullopt : std::optional<std::string>(config_file), overrides);
      err << "effective config (" << name << "): " << rc.effective().dump() << '\n';
      if (name == "sample-contexts") return cmd_sample_contexts(rc, out);
      if (name == "simulate") return cmd_simulate(rc, out);
      if (name == "build-prefs") return cmd_build_prefs(rc, out);
      if (name == "analyze") return cmd_analyze(rc, out);
      if (name == "serve") return cmd_serve(rc, out);
      if (name == "export-study") return cmd_export_study(rc, out);
    } catch (const InputError& e) {
      err << "error: " << e.what() << '\n';
      return kInputError;
    } catch (const nlohmann::json::exception& e) {
      err << "error: bad configuration value: " << e.what() << '\n';
      return kInputError;
    } catch (const ServiceError& e) {
      err << "service error: " << e.what() << '\n';
      return kServiceError;
    } catch (const TransportError& e) {
      err << "service error: " << e.what() << '\n';
      return kServiceError;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kServiceError;
    }
  }
  return kInputError;
}

}  // namespace refgame::cli
