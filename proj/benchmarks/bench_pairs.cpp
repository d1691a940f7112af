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

#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "refgame/preference.hpp"

namespace {

using refgame::prefs::UtilityCondition;

std::vector<refgame::prefs::ScoredCandidate> candidates(int n) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<std::size_t> len(1, 30);
  std::bernoulli_distribution ok(0.6);
  std::vector<refgame::prefs::ScoredCandidate> out;
  for (int i = 0; i < n; ++i) out.push_back({i, len(gen), ok(gen)});
  return out;
}

void BM_SelectPairs(benchmark::State& state, UtilityCondition cond) {
  const auto c = candidates(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(refgame::prefs::select_pairs(c, cond));
}
BENCHMARK_CAPTURE(BM_SelectPairs, success_cost, UtilityCondition::SuccessCost)->Arg(4)->Arg(16)->Arg(64);
BENCHMARK_CAPTURE(BM_SelectPairs, success, UtilityCondition::Success)->Arg(4)->Arg(16)->Arg(64);
BENCHMARK_CAPTURE(BM_SelectPairs, cost, UtilityCondition::Cost)->Arg(4)->Arg(16)->Arg(64);

void BM_BuildPairs(benchmark::State& state) {
  refgame::sim::CandidateTrialSet set{"g", 3, {}};
  for (int j = 0; j < state.range(0); ++j) {
    std::string u = "img-a";
    for (int w = 0; w <= j % 9; ++w) u += " word";
    set.candidates.push_back({"img-a", u, j % 3 ? "img-a" : "img-b", j});
  }
  for (auto _ : state) benchmark::DoNotOptimize(refgame::prefs::build_pairs(set, UtilityCondition::SuccessCost));
}
BENCHMARK(BM_BuildPairs)->Arg(4)->Arg(16);

}  // namespace
