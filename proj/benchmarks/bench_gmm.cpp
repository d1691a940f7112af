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

#include <cstdint>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "refgame/gmm.hpp"

namespace {

std::vector<double> two_modes(std::size_t n) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> lo(1.0, 0.4), hi(4.0, 0.6);
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(i % 2 ? lo(gen) : hi(gen));
  return out;
}

void BM_FitEm(benchmark::State& state) {
  const auto data = two_modes(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(refgame::gmm::fit_em(data, 2, 1));
}
BENCHMARK(BM_FitEm)->Arg(50)->Arg(500)->Arg(5000);

void BM_FitGmm1d(benchmark::State& state) {
  const auto data = two_modes(200);
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  for (auto _ : state) benchmark::DoNotOptimize(refgame::gmm::fit_gmm_1d(data, 1, 4, seeds));
}
BENCHMARK(BM_FitGmm1d);

}  // namespace
