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

// Repeated reference game: a context of labeled images and a trial history
// organized into blocks, where every block shows each image exactly once as
// the target.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "refgame/rng.hpp"

namespace refgame {

using Json = nlohmann::ordered_json;

// Recorded as the guess when a listener's output named no candidate. Counts
// as an incorrect trial.
inline constexpr std::string_view kUnparseableGuess = "<unparseable>";

struct ImageRef {
  std::string id;
  std::string label;
  std::string uri;

  bool operator==(const ImageRef&) const = default;
};

class Context {
 public:
  Context() = default;
  // Throws GameError on k < 2, duplicate ids, or duplicate labels.
  explicit Context(std::vector<ImageRef> images);

  // Labels A, B, C, ... assigned in list order; uri defaults to the id.
  static Context from_ids(const std::vector<std::string>& ids, std::string_view first_label = "A");

  const std::vector<ImageRef>& images() const { return images_; }
  std::size_t size() const { return images_.size(); }

  const ImageRef* find(std::string_view id) const;
  const ImageRef* find_label(std::string_view label) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }
  std::vector<std::string> ids() const;
  // Throws GameError when id is not a member.
  const std::string& label_of(std::string_view id) const;

  bool operator==(const Context&) const = default;

 private:
  std::vector<ImageRef> images_;
};

// Letter for position i: A, B, ..., Z, then AA, AB, ...
std::string label_for_index(std::size_t i, char first = 'A');

struct Trial {
  std::string target;
  std::string utterance;
  std::string guess;
  int block_index = 0;
  int repetition = 0;
  Json meta = Json::object();

  bool correct() const { return guess == target; }
  bool operator==(const Trial&) const = default;
};

class GameState {
 public:
  GameState() = default;
  // Throws GameError unless num_trials is a positive multiple of |context|.
  GameState(std::string game_id, Context context, int num_trials, std::uint64_t seed);

  const std::string& game_id() const { return game_id_; }
  const Context& context() const { return context_; }
  const std::vector<Trial>& trials() const { return trials_; }
  int num_trials() const { return num_trials_; }
  std::uint64_t seed() const { return seed_; }

  bool complete() const { return static_cast<int>(trials_.size()) == num_trials_; }
  int current_block() const;
  // Images not yet targeted in the current (possibly empty) block, canonical order.
  std::vector<std::string> remaining_in_block() const;

  const std::optional<std::string>& pending_target() const { return pending_target_; }
  const std::optional<std::string>& failure() const { return failure_; }
  void mark_failed(std::string reason) { failure_ = std::move(reason); }

  // Free-form game-level annotations (speaker kind, session, config hash ...).
  Json& meta() { return meta_; }
  const Json& meta() const { return meta_; }

  bool operator==(const GameState&) const = default;

 private:
  friend std::string next_target(GameState&, Rng&);
  friend void schedule_target(GameState&, const std::string&);
  friend GameState record_trial(GameState, Trial);
  friend GameState game_from_json(const Json&);

  std::string game_id_;
  Context context_;
  std::vector<Trial> trials_;
  int num_trials_ = 0;
  std::uint64_t seed_ = 0;
  std::optional<std::string> pending_target_;
  std::optional<std::string> failure_;
  Json meta_ = Json::object();
};

// Picks the next target uniformly among images still unused in the current
// block and remembers it as pending. Throws GameError when the game is done.
std::string next_target(GameState& state, Rng& rng);

// Marks a specific image as the pending target (replaying a recorded
// schedule). Throws GameError unless it is still unused in the current block.
void schedule_target(GameState& state, const std::string& target);

// Appends a trial for the pending target, deriving block and repetition.
// Throws GameError on target mismatch or unknown ids.
GameState record_trial(GameState state, Trial trial);

struct Violation {
  std::optional<std::size_t> trial_index;
  std::string message;
};

std::vector<Violation> validate_game(const GameState& log);

double accuracy(const GameState& log);

// Game-log JSONL: one game per line.
Json game_to_json(const GameState& state);
GameState game_from_json(const Json& j);
void write_game_log(std::ostream& out, const std::vector<GameState>& games);
std::vector<GameState> read_game_log(std::istream& in);
std::vector<GameState> read_game_log_file(const std::string& path);

}  // namespace refgame
