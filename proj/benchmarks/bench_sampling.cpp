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

#include "refgame/context_sampler.hpp"

namespace {

refgame::sampler::EmbeddingIndex bank(std::size_t n, std::size_t dim) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  refgame::sampler::EmbeddingIndex index;
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : v) x = nd(gen);
    index.add("img-" + std::to_string(i), v);
  }
  return index;
}

void BM_SampleContext(benchmark::State& state) {
  const auto index = bank(static_cast<std::size_t>(state.range(0)), 512);
  refgame::Rng rng(5);
  for (auto _ : state) benchmark::DoNotOptimize(refgame::sampler::sample_context(index, 4, 0.05, rng));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SampleContext)->RangeMultiplier(4)->Range(64, 4096)->Complexity(benchmark::oN);

void BM_SelectionProbabilities(benchmark::State& state) {
  const auto index = bank(1024, 512);
  std::vector<std::size_t> rows;
  for (std::size_t i = 1; i < index.size(); ++i) rows.push_back(i);
  for (auto _ : state) benchmark::DoNotOptimize(refgame::sampler::selection_probabilities(index, 0, rows, 0.05));
}
BENCHMARK(BM_SelectionProbabilities);

}  // namespace
