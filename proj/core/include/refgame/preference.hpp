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

// Preference pairs from candidate trial sets. All comparisons stay inside one
// candidate set.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "refgame/game.hpp"
#include "refgame/prompt.hpp"
#include "refgame/simulation.hpp"

namespace refgame::prefs {

enum class UtilityCondition { SuccessCost, Success, Cost };

// "success+cost", "success", "cost".
std::optional<UtilityCondition> parse_condition(std::string_view s);
std::string_view to_string(UtilityCondition c);

// The fields the pair rules look at.
struct ScoredCandidate {
  int sample_index = 0;
  std::size_t length = 0;
  bool correct = false;
};

// (chosen sample_index, rejected sample_index) under the condition.
//   SuccessCost: t* is the shortest correct candidate (lowest sample_index on
//     ties); pairs (t*, t) for every t longer than t* or incorrect.
//   Success: every correct x every incorrect.
//   Cost: every (a, b) with length(a) < length(b).
std::vector<std::pair<int, int>> select_pairs(std::span<const ScoredCandidate> candidates, UtilityCondition c);

struct HistoryTurn {
  std::string target;
  std::string utterance;
  std::string guess;

  bool operator==(const HistoryTurn&) const = default;
};

struct PreferencePair {
  std::string game_id;
  int trial_index = 0;
  UtilityCondition condition = UtilityCondition::SuccessCost;
  std::vector<std::string> context;
  std::vector<HistoryTurn> history;
  std::string target;
  std::vector<agents::PromptMessage> prompt_messages;
  std::string chosen;
  std::string rejected;
  std::size_t chosen_len = 0;
  std::size_t rejected_len = 0;
  bool chosen_correct = false;
  bool rejected_correct = false;
  int chosen_sample_index = 0;
  int rejected_sample_index = 0;
  std::string config_hash;

  bool operator==(const PreferencePair&) const = default;
};

// Pairs for one candidate set; game provenance beyond game_id, trial_index
// and target is left empty.
std::vector<PreferencePair> build_pairs(const sim::CandidateTrialSet& set, UtilityCondition c);
std::vector<PreferencePair> build_pairs_success_cost(const sim::CandidateTrialSet& set);
std::vector<PreferencePair> build_pairs_success(const sim::CandidateTrialSet& set);
std::vector<PreferencePair> build_pairs_cost(const sim::CandidateTrialSet& set);

struct DatasetOptions {
  UtilityCondition condition = UtilityCondition::SuccessCost;
  const agents::DemonstrationGame* demo = nullptr;
  agents::SpeakerPromptOptions prompt;
  std::string config_hash;
};

struct Dataset {
  std::vector<PreferencePair> pairs;
  std::vector<std::string> excluded_games;  // incomplete or failed
  std::size_t candidate_sets = 0;           // sets that contributed
};

// Joins candidate sets with their game logs. Sets from incomplete games are
// dropped; a set whose game is missing or whose target disagrees with the log
// raises InputError.
Dataset build_dataset(std::span<const GameState> games, std::span<const sim::CandidateTrialSet> samples,
                      const DatasetOptions& opts);

Json pair_to_json(const PreferencePair& p);
PreferencePair pair_from_json(const Json& j);
void write_pairs(std::ostream& out, std::span<const PreferencePair> pairs);
std::vector<PreferencePair> read_pairs(std::istream& in);

}  // namespace refgame::prefs
