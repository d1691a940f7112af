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

#include "refgame/preference.hpp"

#include <map>

#include "refgame/errors.hpp"
#include "refgame/jsonl.hpp"
#include "refgame/text.hpp"

namespace refgame::prefs {

std::optional<UtilityCondition> parse_condition(std::string_view s) {
  if (s == "success+cost") return UtilityCondition::SuccessCost;
  if (s == "success") return UtilityCondition::Success;
  if (s == "cost") return UtilityCondition::Cost;
  return std::nullopt;
}

std::string_view to_string(UtilityCondition c) {
  switch (c) {
    case UtilityCondition::SuccessCost:
      return "success+cost";
    case UtilityCondition::Success:
      return "success";
    case UtilityCondition::Cost:
      return "cost";
  }
  return "success+cost";
}

std::vector<std::pair<int, int>> select_pairs(std::span<const ScoredCandidate> cands, UtilityCondition c) {
  std::vector<std::pair<int, int>> out;
  switch (c) {
    case UtilityCondition::SuccessCost: {
      const ScoredCandidate* best = nullptr;
      for (const auto& t : cands) {
        if (!t.correct) continue;
        if (best == nullptr || t.length < best->length ||
            (t.length == best->length && t.sample_index < best->sample_index)) {
          best = &t;
        }
      }
      if (best == nullptr) break;
      for (const auto& t : cands) {
        if (&t == best) continue;
        if (t.length > best->length || !t.correct) out.emplace_back(best->sample_index, t.sample_index);
      }
      break;
    }
    case UtilityCondition::Success:
      for (const auto& w : cands) {
        if (!w.correct) continue;
        for (const auto& l : cands) {
          if (!l.correct) out.emplace_back(w.sample_index, l.sample_index);
        }
      }
      break;
    case UtilityCondition::Cost:
      for (const auto& w : cands) {
        for (const auto& l : cands) {
          if (w.length < l.length) out.emplace_back(w.sample_index, l.sample_index);
        }
      }
      break;
  }
  return out;
}

std::vector<PreferencePair> build_pairs(const sim::CandidateTrialSet& set, UtilityCondition c) {
  std::vector<ScoredCandidate> scored;
  std::map<int, const sim::CandidateTrial*> by_index;
  for (const auto& t : set.candidates) {
    scored.push_back({t.sample_index, text::token_count(t.utterance), t.correct()});
    if (!by_index.emplace(t.sample_index, &t).second) {
      throw InputError(set.game_id + " trial " + std::to_string(set.trial_index) + ": duplicate sample_index");
    }
  }
  std::vector<PreferencePair> out;
  for (auto [w, l] : select_pairs(scored, c)) {
    const auto& cw = *by_index.at(w);
    const auto& cl = *by_index.at(l);
    PreferencePair p;
    p.game_id = set.game_id;
    p.trial_index = set.trial_index;
    p.condition = c;
    p.target = cw.target;
    p.chosen = cw.utterance;
    p.rejected = cl.utterance;
    p.chosen_len = text::token_count(cw.utterance);
    p.rejected_len = text::token_count(cl.utterance);
    p.chosen_correct = cw.correct();
    p.rejected_correct = cl.correct();
    p.chosen_sample_index = w;
    p.rejected_sample_index = l;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PreferencePair> build_pairs_success_cost(const sim::CandidateTrialSet& set) {
  return build_pairs(set, UtilityCondition::SuccessCost);
}
std::vector<PreferencePair> build_pairs_success(const sim::CandidateTrialSet& set) {
  return build_pairs(set, UtilityCondition::Success);
}
std::vector<PreferencePair> build_pairs_cost(const sim::CandidateTrialSet& set) {
  return build_pairs(set, UtilityCondition::Cost);
}

Dataset build_dataset(std::span<const GameState> games, std::span<const sim::CandidateTrialSet> samples,
                      const DatasetOptions& opts) {
  std::map<std::string, const GameState*> by_id;
  Dataset ds;
  for (const auto& g : games) {
    if (!by_id.emplace(g.game_id(), &g).second) throw InputError("duplicate game_id '" + g.game_id() + "' in logs");
    if (!g.complete() || g.failure()) ds.excluded_games.push_back(g.game_id());
  }
  for (const auto& set : samples) {
    auto it = by_id.find(set.game_id);
    if (it == by_id.end()) throw InputError("samples reference unknown game '" + set.game_id + "'");
    const GameState& g = *it->second;
    if (!g.complete() || g.failure()) continue;
    const auto& trials = g.trials();
    if (set.trial_index < 0 || static_cast<std::size_t>(set.trial_index) >= trials.size()) {
      throw InputError(set.game_id + ": trial_index " + std::to_string(set.trial_index) + " out of range");
    }
    if (trials[static_cast<std::size_t>(set.trial_index)].target != set.target()) {
      throw InputError(set.game_id + " trial " + std::to_string(set.trial_index) + ": target disagrees with log");
    }
    auto pairs = build_pairs(set, opts.condition);
    ++ds.candidate_sets;
    if (pairs.empty()) continue;

    const auto prefix = std::span(trials).first(static_cast<std::size_t>(set.trial_index));
    std::vector<HistoryTurn> history;
    for (const auto& t : prefix) history.push_back({t.target, t.utterance, t.guess});
    auto prompt = agents::build_speaker_prompt(g.context(), prefix, set.target(), opts.demo, opts.prompt);
    for (auto& p : pairs) {
      p.context = g.context().ids();
      p.history = history;
      p.prompt_messages = prompt.messages;
      p.config_hash = opts.config_hash;
      ds.pairs.push_back(std::move(p));
    }
  }
  return ds;
}

Json pair_to_json(const PreferencePair& p) {
  Json history = Json::array();
  for (const auto& h : p.history) history.push_back({{"target", h.target}, {"utterance", h.utterance}, {"guess", h.guess}});
  return {{"game_id", p.game_id},
          {"trial_index", p.trial_index},
          {"condition", to_string(p.condition)},
          {"context", p.context},
          {"history", std::move(history)},
          {"target", p.target},
          {"prompt_messages", agents::prompt_messages_to_json(p.prompt_messages)},
          {"chosen", p.chosen},
          {"rejected", p.rejected},
          {"chosen_len", p.chosen_len},
          {"rejected_len", p.rejected_len},
          {"chosen_correct", p.chosen_correct},
          {"rejected_correct", p.rejected_correct},
          {"chosen_sample_index", p.chosen_sample_index},
          {"rejected_sample_index", p.rejected_sample_index},
          {"config_hash", p.config_hash}};
}

PreferencePair pair_from_json(const Json& j) {
  try {
    PreferencePair p;
    p.game_id = j.at("game_id").get<std::string>();
    p.trial_index = j.at("trial_index").get<int>();
    const auto cond = j.at("condition").get<std::string>();
    auto c = parse_condition(cond);
    if (!c) throw InputError("unknown condition '" + cond + "'");
    p.condition = *c;
    p.context = j.at("context").get<std::vector<std::string>>();
    for (const auto& h : j.at("history")) {
      p.history.push_back(
          {h.at("target").get<std::string>(), h.at("utterance").get<std::string>(), h.at("guess").get<std::string>()});
    }
    p.target = j.at("target").get<std::string>();
    p.prompt_messages = agents::prompt_messages_from_json(j.at("prompt_messages"));
    p.chosen = j.at("chosen").get<std::string>();
    p.rejected = j.at("rejected").get<std::string>();
    p.chosen_len = j.at("chosen_len").get<std::size_t>();
    p.rejected_len = j.at("rejected_len").get<std::size_t>();
    p.chosen_correct = j.at("chosen_correct").get<bool>();
    p.rejected_correct = j.at("rejected_correct").get<bool>();
    p.chosen_sample_index = j.value("chosen_sample_index", 0);
    p.rejected_sample_index = j.value("rejected_sample_index", 0);
    p.config_hash = j.value("config_hash", std::string{});
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed preference record: ") + e.what());
  }
}

void write_pairs(std::ostream& out, std::span<const PreferencePair> pairs) {
  for (const auto& p : pairs) write_jsonl_line(out, pair_to_json(p));
}

std::vector<PreferencePair> read_pairs(std::istream& in) {
  std::vector<PreferencePair> out;
  for_each_jsonl(in, [&](const Json& j, std::size_t) { out.push_back(pair_from_json(j)); });
  return out;
}

}  // namespace refgame::prefs
