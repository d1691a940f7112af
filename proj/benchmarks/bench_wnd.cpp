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

#include "refgame/metrics.hpp"

namespace {

std::vector<std::string> words(std::size_t n, std::mt19937_64& gen) {
  static const char* vocab[] = {"the", "small", "blue", "shape", "with", "a", "hat", "left", "arm", "up"};
  std::uniform_int_distribution<int> pick(0, 9);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(vocab[pick(gen)]);
  return out;
}

void BM_Wnd(benchmark::State& state) {
  std::mt19937_64 gen(7);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto prev = words(n, gen);
  const auto curr = words(n, gen);
  for (auto _ : state) benchmark::DoNotOptimize(refgame::metrics::wnd(prev, curr));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Wnd)->RangeMultiplier(2)->Range(4, 256)->Complexity(benchmark::oNSquared);

}  // namespace
