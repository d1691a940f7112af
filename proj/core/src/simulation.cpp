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

#include "refgame/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "refgame/errors.hpp"
#include "refgame/jsonl.hpp"
#include "refgame/text.hpp"

namespace refgame::sim {

std::optional<ContinuationPolicy> parse_policy(std::string_view s) {
  if (s == "uniform") return ContinuationPolicy::Uniform;
  if (s == "prefer_success") return ContinuationPolicy::PreferSuccess;
  if (s == "greedy_shortest_success") return ContinuationPolicy::GreedyShortestSuccess;
  return std::nullopt;
}

std::string_view to_string(ContinuationPolicy p) {
  switch (p) {
    case ContinuationPolicy::Uniform:
      return "uniform";
    case ContinuationPolicy::PreferSuccess:
      return "prefer_success";
    case ContinuationPolicy::GreedyShortestSuccess:
      return "greedy_shortest_success";
  }
  return "uniform";
}

void SimulationConfig::validate() const {
  if (samples_per_trial < 1) throw InputError("samples per trial (n) must be >= 1");
  if (trials_per_game < 1) throw InputError("trials per game (N) must be >= 1");
  decoding.validate();
  if (decoding.n != samples_per_trial) throw InputError("decoding.n must equal samples per trial");
}

const CandidateTrial& choose_continuation(const CandidateTrialSet& set, ContinuationPolicy policy, Rng& rng) {
  const auto& c = set.candidates;
  if (c.empty()) throw InputError("choose_continuation: empty candidate set");
  std::vector<std::size_t> correct;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i].correct()) correct.push_back(i);
  }
  switch (policy) {
    case ContinuationPolicy::Uniform:
      break;
    case ContinuationPolicy::PreferSuccess:
      if (!correct.empty()) return c[correct[rng.uniform_index(correct.size())]];
      break;
    case ContinuationPolicy::GreedyShortestSuccess:
      if (!correct.empty()) {
        const CandidateTrial* best = nullptr;
        std::size_t best_len = 0;
        for (std::size_t i : correct) {
          const std::size_t len = text::token_count(c[i].utterance);
          if (best == nullptr || len < best_len || (len == best_len && c[i].sample_index < best->sample_index)) {
            best = &c[i];
            best_len = len;
          }
        }
        return *best;
      }
      break;
  }
  return c[rng.uniform_index(c.size())];
}

GameRun simulate_game(const SimulationConfig& cfg, std::string game_id, std::uint64_t game_seed, const Context& ctx,
                      agents::Speaker& speaker, agents::Listener& listener) {
  cfg.validate();
  GameRun run;
  run.log = GameState(game_id, ctx, cfg.trials_per_game, game_seed);
  Rng schedule(derive_seed(game_seed, static_cast<std::uint64_t>(SeedStream::Schedule)));
  Rng continuation(derive_seed(game_seed, static_cast<std::uint64_t>(SeedStream::Continuation)));
  const std::uint64_t speaker_base = derive_seed(game_seed, static_cast<std::uint64_t>(SeedStream::Speaker));
  const std::uint64_t listener_base = derive_seed(game_seed, static_cast<std::uint64_t>(SeedStream::Listener));
  const auto n = static_cast<std::size_t>(cfg.samples_per_trial);

  for (int i = 0; i < cfg.trials_per_game; ++i) {
    try {
      const std::string target = next_target(run.log, schedule);
      const auto& history = run.log.trials();
      agents::SpeakerQuery sq{ctx, history, target, derive_seed(speaker_base, static_cast<std::uint64_t>(i))};
      auto utterances = speaker.sample(sq, cfg.decoding);
      if (utterances.size() != n) {
        throw TransportError("", "speaker returned " + std::to_string(utterances.size()) + " utterances, expected " +
                                     std::to_string(n));
      }
      CandidateTrialSet set{game_id, i, {}};
      for (std::size_t j = 0; j < n; ++j) {
        std::string guess;
        agents::ListenerQuery lq{ctx, history, utterances[j],
                                 derive_seed(listener_base, static_cast<std::uint64_t>(i) * n + j)};
        try {
          guess = listener.guess(lq);
          if (!ctx.contains(guess)) throw UnparseableGuess(guess);
        } catch (const UnparseableGuess& e) {
          spdlog::warn("{} trial {} sample {}: {}; counted as incorrect", game_id, i, j, e.what());
          guess = std::string(kUnparseableGuess);
        }
        set.candidates.push_back({target, utterances[j], std::move(guess), static_cast<int>(j)});
      }
      const CandidateTrial& next = choose_continuation(set, cfg.policy, continuation);
      Trial t{next.target, next.utterance, next.guess, 0, 0, Json{{"sample_index", next.sample_index}}};
      run.log = record_trial(std::move(run.log), std::move(t));
      run.samples.push_back(std::move(set));
    } catch (const std::exception& e) {
      spdlog::error("{}: aborted at trial {}: {}", game_id, i, e.what());
      run.log.mark_failed(e.what());
      break;
    }
  }
  return run;
}

Json samples_to_json(const CandidateTrialSet& set) {
  Json candidates = Json::array();
  for (const auto& c : set.candidates) {
    candidates.push_back(
        {{"utterance", c.utterance}, {"guess", c.guess}, {"correct", c.correct()}, {"sample_index", c.sample_index}});
  }
  return {{"game_id", set.game_id},
          {"trial_index", set.trial_index},
          {"target", set.candidates.empty() ? std::string{} : set.target()},
          {"candidates", std::move(candidates)}};
}

CandidateTrialSet samples_from_json(const Json& j) {
  try {
    CandidateTrialSet set{j.at("game_id").get<std::string>(), j.at("trial_index").get<int>(), {}};
    const auto target = j.at("target").get<std::string>();
    std::vector<int> seen;
    for (const auto& c : j.at("candidates")) {
      CandidateTrial ct{target, c.at("utterance").get<std::string>(), c.at("guess").get<std::string>(),
                        c.at("sample_index").get<int>()};
      if (c.contains("correct") && c.at("correct").get<bool>() != ct.correct()) {
        throw InputError("candidate 'correct' disagrees with guess == target");
      }
      if (std::find(seen.begin(), seen.end(), ct.sample_index) != seen.end()) {
        throw InputError("duplicate sample_index " + std::to_string(ct.sample_index));
      }
      seen.push_back(ct.sample_index);
      set.candidates.push_back(std::move(ct));
    }
    if (set.candidates.empty()) throw InputError("candidate set without candidates");
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed samples record: ") + e.what());
  }
}

std::vector<CandidateTrialSet> read_samples(std::istream& in) {
  std::vector<CandidateTrialSet> out;
  for_each_jsonl(in, [&](const Json& j, std::size_t line) {
    try {
      out.push_back(samples_from_json(j));
    } catch (const InputError& e) {
      throw InputError("samples line " + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

std::vector<CandidateTrialSet> read_samples_file(const std::string& path) {
  auto in = open_input(path);
  return read_samples(in);
}

std::size_t BatchResult::incomplete_count() const {
  return static_cast<std::size_t>(std::count_if(games.begin(), games.end(), [](const GameSummary& g) { return !g.complete; }));
}

BatchResult run_batch(const BatchSpec& spec, agents::Speaker& speaker, agents::Listener& listener) {
  spec.config.validate();
  if (spec.contexts.empty()) throw InputError("run_batch: no contexts");
  if (spec.games_per_context < 1) throw InputError("run_batch: games per context must be >= 1");
  const std::size_t total = spec.contexts.size() * static_cast<std::size_t>(spec.games_per_context);

  BatchResult result;
  result.runs.resize(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t idx = next.fetch_add(1); idx < total; idx = next.fetch_add(1)) {
      const Context& ctx = spec.contexts[idx / static_cast<std::size_t>(spec.games_per_context)];
      char id[32];
      std::snprintf(id, sizeof id, "game-%05zu", idx);
      const std::uint64_t seed = derive_seed(spec.config.seed, idx);
      result.runs[idx] = simulate_game(spec.config, id, seed, ctx, speaker, listener);
      if (!spec.config_hash.empty()) result.runs[idx].log.meta()["config_hash"] = spec.config_hash;
    }
  };
  const int threads = std::max(1, std::min<int>(spec.parallelism, static_cast<int>(total)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::size_t trials = 0, sets = 0, candidates = 0, complete = 0;
  Json games = Json::array();
  for (const auto& run : result.runs) {
    GameSummary s{run.log.game_id(), run.log.seed(), run.log.context().ids(),
                  static_cast<int>(run.log.trials().size()), run.complete(), run.log.failure()};
    trials += run.log.trials().size();
    sets += run.samples.size();
    for (const auto& set : run.samples) candidates += set.candidates.size();
    complete += s.complete ? 1 : 0;
    Json g = {{"game_id", s.game_id},
              {"seed", s.seed},
              {"context", s.context_ids},
              {"trials", s.trials},
              {"status", s.complete ? "complete" : "incomplete"}};
    if (s.failure) g["failure"] = *s.failure;
    games.push_back(std::move(g));
    result.games.push_back(std::move(s));
  }
  const auto& cfg = spec.config;
  result.manifest = {
      {"config_hash", spec.config_hash},
      {"seed", cfg.seed},
      {"samples_per_trial", cfg.samples_per_trial},
      {"trials_per_game", cfg.trials_per_game},
      {"games_per_context", spec.games_per_context},
      {"continuation_policy", to_string(cfg.policy)},
      {"decoding",
       {{"temperature", cfg.decoding.temperature},
        {"top_p", cfg.decoding.top_p},
        {"n", cfg.decoding.n},
        {"max_tokens", cfg.decoding.max_tokens}}},
      {"agents", {{"speaker", speaker.describe()}, {"listener", listener.describe()}}},
      {"counts",
       {{"games", total},
        {"complete", complete},
        {"incomplete", total - complete},
        {"trials", trials},
        {"candidate_sets", sets},
        {"candidates", candidates}}},
      {"files", {{"logs", "logs.jsonl"}, {"samples", "samples.jsonl"}}},
      {"games", std::move(games)}};
  return result;
}

void write_batch(const BatchResult& result, const std::filesystem::path& dir, const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output((dir / "logs.jsonl").string());
    for (const auto& run : result.runs) write_jsonl_line(out, game_to_json(run.log));
  }
  {
    auto out = open_output((dir / "samples.jsonl").string());
    for (const auto& run : result.runs) {
      for (const auto& set : run.samples) {
        Json j = samples_to_json(set);
        if (!config_hash.empty()) j["config_hash"] = config_hash;
        write_jsonl_line(out, j);
      }
    }
  }
  auto out = open_output((dir / "manifest.json").string());
  out << result.manifest.dump(2) << '\n';
}

}  // namespace refgame::sim
