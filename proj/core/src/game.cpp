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

#include "refgame/game.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "refgame/errors.hpp"
#include "refgame/jsonl.hpp"

namespace refgame {

std::string label_for_index(std::size_t i, char first) {
  std::string label;
  std::size_t n = i;
  do {
    label.insert(label.begin(), static_cast<char>(first + n % 26));
    n /= 26;
  } while (n-- > 0);
  return label;
}

Context::Context(std::vector<ImageRef> images) : images_(std::move(images)) {
  if (images_.size() < 2) throw GameError("context needs at least 2 images");
  std::set<std::string_view> ids, labels;
  for (const auto& img : images_) {
    if (img.id.empty()) throw GameError("image with empty id");
    if (!ids.insert(img.id).second) throw GameError("duplicate image id '" + img.id + "' in context");
    if (!labels.insert(img.label).second) throw GameError("duplicate label '" + img.label + "' in context");
  }
}

Context Context::from_ids(const std::vector<std::string>& ids, std::string_view first_label) {
  std::vector<ImageRef> images;
  images.reserve(ids.size());
  const char first = first_label.empty() ? 'A' : first_label.front();
  for (std::size_t i = 0; i < ids.size(); ++i) images.push_back({ids[i], label_for_index(i, first), ids[i]});
  return Context(std::move(images));
}

const ImageRef* Context::find(std::string_view id) const {
  auto it = std::find_if(images_.begin(), images_.end(), [&](const ImageRef& r) { return r.id == id; });
  return it == images_.end() ? nullptr : &*it;
}

const ImageRef* Context::find_label(std::string_view label) const {
  auto it = std::find_if(images_.begin(), images_.end(), [&](const ImageRef& r) { return r.label == label; });
  return it == images_.end() ? nullptr : &*it;
}

std::vector<std::string> Context::ids() const {
  std::vector<std::string> out;
  out.reserve(images_.size());
  for (const auto& img : images_) out.push_back(img.id);
  return out;
}

const std::string& Context::label_of(std::string_view id) const {
  const ImageRef* img = find(id);
  if (img == nullptr) throw GameError("image '" + std::string(id) + "' is not in the context");
  return img->label;
}

GameState::GameState(std::string game_id, Context context, int num_trials, std::uint64_t seed)
    : game_id_(std::move(game_id)), context_(std::move(context)), num_trials_(num_trials), seed_(seed) {
  const int k = static_cast<int>(context_.size());
  if (k < 2) throw GameError("game context needs at least 2 images");
  if (num_trials_ <= 0 || num_trials_ % k != 0) {
    throw GameError("trials per game (" + std::to_string(num_trials_) + ") must be a positive multiple of the context size (" +
                    std::to_string(k) + ")");
  }
}

int GameState::current_block() const {
  return static_cast<int>(trials_.size() / context_.size());
}

std::vector<std::string> GameState::remaining_in_block() const {
  const std::size_t k = context_.size();
  const std::size_t block_start = (trials_.size() / k) * k;
  std::vector<std::string> remaining;
  for (const auto& img : context_.images()) {
    bool used = false;
    for (std::size_t i = block_start; i < trials_.size(); ++i) {
      if (trials_[i].target == img.id) {
        used = true;
        break;
      }
    }
    if (!used) remaining.push_back(img.id);
  }
  return remaining;
}

std::string next_target(GameState& state, Rng& rng) {
  if (state.complete()) throw GameError("game '" + state.game_id_ + "' already has all its trials");
  auto remaining = state.remaining_in_block();
  std::string target = remaining[rng.uniform_index(remaining.size())];
  state.pending_target_ = target;
  return target;
}

void schedule_target(GameState& state, const std::string& target) {
  if (state.complete()) throw GameError("game '" + state.game_id_ + "' already has all its trials");
  auto remaining = state.remaining_in_block();
  if (std::find(remaining.begin(), remaining.end(), target) == remaining.end()) {
    throw GameError("image '" + target + "' is not available as a target in the current block");
  }
  state.pending_target_ = target;
}

GameState record_trial(GameState state, Trial trial) {
  if (state.complete()) throw GameError("game '" + state.game_id_ + "' already has all its trials");
  if (!state.context_.contains(trial.target)) throw GameError("unknown target image '" + trial.target + "'");
  if (trial.guess != kUnparseableGuess && !state.context_.contains(trial.guess)) {
    throw GameError("unknown guess image '" + trial.guess + "'");
  }
  if (!state.pending_target_ || *state.pending_target_ != trial.target) {
    throw GameError("trial target '" + trial.target + "' does not match the scheduled target '" +
                    state.pending_target_.value_or("<none>") + "'");
  }
  auto remaining = state.remaining_in_block();
  if (std::find(remaining.begin(), remaining.end(), trial.target) == remaining.end()) {
    throw GameError("image '" + trial.target + "' was already the target in this block");
  }
  trial.block_index = state.current_block();
  trial.repetition = static_cast<int>(std::count_if(state.trials_.begin(), state.trials_.end(),
                                                    [&](const Trial& t) { return t.target == trial.target; }));
  if (!trial.meta.is_object()) trial.meta = Json::object();
  state.trials_.push_back(std::move(trial));
  state.pending_target_.reset();
  return state;
}

std::vector<Violation> validate_game(const GameState& log) {
  std::vector<Violation> out;
  const auto& ctx = log.context();
  const std::size_t k = ctx.size();
  if (k < 2) {
    out.push_back({std::nullopt, "context has fewer than 2 images"});
    return out;
  }
  {
    std::set<std::string_view> ids, labels;
    for (const auto& img : ctx.images()) {
      if (!ids.insert(img.id).second) out.push_back({std::nullopt, "duplicate image id '" + img.id + "'"});
      if (!labels.insert(img.label).second) out.push_back({std::nullopt, "duplicate label '" + img.label + "'"});
    }
  }
  if (log.num_trials() <= 0 || log.num_trials() % static_cast<int>(k) != 0) {
    out.push_back({std::nullopt, "num_trials is not a positive multiple of the context size"});
  }
  const auto& trials = log.trials();
  if (static_cast<int>(trials.size()) > log.num_trials()) {
    out.push_back({std::nullopt, "more trials than num_trials"});
  }
  std::set<std::string> in_block;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const Trial& t = trials[i];
    const int block = static_cast<int>(i / k);
    if (i % k == 0) in_block.clear();
    if (!ctx.contains(t.target)) {
      out.push_back({i, "trial " + std::to_string(i) + ": target '" + t.target + "' not in context"});
    } else if (!in_block.insert(t.target).second) {
      out.push_back({i, "trial " + std::to_string(i) + ": target '" + t.target + "' repeats within block " +
                            std::to_string(block)});
    }
    if (t.guess != kUnparseableGuess && !ctx.contains(t.guess)) {
      out.push_back({i, "trial " + std::to_string(i) + ": guess '" + t.guess + "' not in context"});
    }
    if (t.block_index != block) {
      out.push_back({i, "trial " + std::to_string(i) + ": block index " + std::to_string(t.block_index) +
                            " should be " + std::to_string(block)});
    }
    if (t.repetition != t.block_index) {
      out.push_back({i, "trial " + std::to_string(i) + ": repetition " + std::to_string(t.repetition) +
                            " differs from block index " + std::to_string(t.block_index)});
    }
  }
  return out;
}

double accuracy(const GameState& log) {
  if (log.trials().empty()) return 0.0;
  auto correct = std::count_if(log.trials().begin(), log.trials().end(), [](const Trial& t) { return t.correct(); });
  return static_cast<double>(correct) / static_cast<double>(log.trials().size());
}

Json game_to_json(const GameState& state) {
  Json ctx = Json::array();
  for (const auto& img : state.context().images()) {
    ctx.push_back({{"id", img.id}, {"label", img.label}, {"uri", img.uri}});
  }
  Json trials = Json::array();
  for (const auto& t : state.trials()) {
    trials.push_back({{"target", t.target},
                      {"utterance", t.utterance},
                      {"guess", t.guess},
                      {"block", t.block_index},
                      {"repetition", t.repetition},
                      {"correct", t.correct()},
                      {"meta", t.meta}});
  }
  Json j = {{"game_id", state.game_id()},
            {"context", std::move(ctx)},
            {"seed", state.seed()},
            {"num_trials", state.num_trials()},
            {"status", state.complete() ? "complete" : "incomplete"},
            {"trials", std::move(trials)}};
  if (state.pending_target()) j["pending_target"] = *state.pending_target();
  if (state.failure()) j["failure"] = *state.failure();
  if (!state.meta().empty()) j["meta"] = state.meta();
  return j;
}

GameState game_from_json(const Json& j) {
  try {
    std::vector<ImageRef> images;
    for (const auto& img : j.at("context")) {
      images.push_back({img.at("id").get<std::string>(), img.at("label").get<std::string>(),
                        img.value("uri", img.at("id").get<std::string>())});
    }
    Context ctx(std::move(images));
    const int n = j.contains("num_trials") ? j.at("num_trials").get<int>()
                                           : static_cast<int>(j.at("trials").size());
    GameState state(j.at("game_id").get<std::string>(), std::move(ctx), n, j.at("seed").get<std::uint64_t>());
    for (const auto& jt : j.at("trials")) {
      Trial t;
      t.target = jt.at("target").get<std::string>();
      t.utterance = jt.at("utterance").get<std::string>();
      t.guess = jt.at("guess").get<std::string>();
      t.block_index = jt.at("block").get<int>();
      t.repetition = jt.at("repetition").get<int>();
      if (jt.contains("meta") && jt.at("meta").is_object()) t.meta = jt.at("meta");
      if (jt.contains("correct") && jt.at("correct").get<bool>() != t.correct()) {
        throw GameError("trial 'correct' field disagrees with guess == target");
      }
      state.trials_.push_back(std::move(t));
    }
    if (j.contains("pending_target")) state.pending_target_ = j.at("pending_target").get<std::string>();
    if (j.contains("failure")) state.failure_ = j.at("failure").get<std::string>();
    if (j.contains("meta") && j.at("meta").is_object()) state.meta_ = j.at("meta");
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed game log record: ") + e.what());
  }
}

void write_game_log(std::ostream& out, const std::vector<GameState>& games) {
  for (const auto& g : games) write_jsonl_line(out, game_to_json(g));
}

std::vector<GameState> read_game_log(std::istream& in) {
  std::vector<GameState> games;
  for_each_jsonl(in, [&](const Json& j, std::size_t line) {
    try {
      games.push_back(game_from_json(j));
    } catch (const InputError& e) {
      throw InputError("game log line " + std::to_string(line) + ": " + e.what());
    }
  });
  return games;
}

std::vector<GameState> read_game_log_file(const std::string& path) {
  auto in = open_input(path);
  return read_game_log(in);
}

}  // namespace refgame
