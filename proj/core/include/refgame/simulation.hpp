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

// Self-play rollouts of repeated reference games. For each trial the speaker
// proposes n utterances, the listener guesses for each, the candidate set is
// kept as training material, and one candidate continues the game.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refgame/agents.hpp"
#include "refgame/game.hpp"
#include "refgame/rng.hpp"

namespace refgame::sim {

struct CandidateTrial {
  std::string target;
  std::string utterance;
  std::string guess;
  int sample_index = 0;

  bool correct() const { return guess == target; }
  bool operator==(const CandidateTrial&) const = default;
};

struct CandidateTrialSet {
  std::string game_id;
  int trial_index = 0;  // also the length of the history prefix
  std::vector<CandidateTrial> candidates;

  const std::string& target() const { return candidates.front().target; }
  bool operator==(const CandidateTrialSet&) const = default;
};

enum class ContinuationPolicy { Uniform, PreferSuccess, GreedyShortestSuccess };

std::optional<ContinuationPolicy> parse_policy(std::string_view s);
std::string_view to_string(ContinuationPolicy p);

struct SimulationConfig {
  int samples_per_trial = 4;  // n
  int trials_per_game = 20;   // N
  agents::DecodingParams decoding;
  ContinuationPolicy policy = ContinuationPolicy::Uniform;
  std::uint64_t seed = 0;

  // Throws InputError when n < 1 or N < 1, or decoding is invalid.
  void validate() const;
};

// Picks the candidate that extends the game.
//   Uniform: uniform over all candidates.
//   PreferSuccess: uniform over correct ones, all when none is correct.
//   GreedyShortestSuccess: shortest correct (lowest sample_index on ties),
//   uniform over all when none is correct.
const CandidateTrial& choose_continuation(const CandidateTrialSet& set, ContinuationPolicy policy, Rng& rng);

struct GameRun {
  std::vector<CandidateTrialSet> samples;  // aligned with log.trials()
  GameState log;

  bool complete() const { return log.complete() && !log.failure(); }
};

// Seed streams derived from the game seed.
enum class SeedStream : std::uint64_t { Schedule = 0, Continuation = 1, Speaker = 2, Listener = 3 };

// Runs one game of N trials. Agent failures stop the game early: the
// returned log is incomplete and carries the failure reason.
GameRun simulate_game(const SimulationConfig& cfg, std::string game_id, std::uint64_t game_seed, const Context& ctx,
                      agents::Speaker& speaker, agents::Listener& listener);

// Samples JSONL: {game_id, trial_index, target, candidates:[{utterance, guess, correct, sample_index}]}.
Json samples_to_json(const CandidateTrialSet& set);
CandidateTrialSet samples_from_json(const Json& j);
std::vector<CandidateTrialSet> read_samples(std::istream& in);
std::vector<CandidateTrialSet> read_samples_file(const std::string& path);

struct BatchSpec {
  SimulationConfig config;
  std::vector<Context> contexts;
  int games_per_context = 1;
  int parallelism = 1;
  std::string config_hash;
};

struct GameSummary {
  std::string game_id;
  std::uint64_t seed = 0;
  std::vector<std::string> context_ids;
  int trials = 0;
  bool complete = false;
  std::optional<std::string> failure;
};

struct BatchResult {
  std::vector<GameRun> runs;  // in game order
  std::vector<GameSummary> games;
  Json manifest;

  std::size_t incomplete_count() const;
};

// Agents must tolerate concurrent calls when parallelism > 1.
BatchResult run_batch(const BatchSpec& spec, agents::Speaker& speaker, agents::Listener& listener);

// Writes logs.jsonl, samples.jsonl and manifest.json into dir.
void write_batch(const BatchResult& result, const std::filesystem::path& dir, const std::string& config_hash);

}  // namespace refgame::sim
