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

#include <map>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "refgame/simulation.hpp"

namespace {

std::vector<refgame::Context> contexts(int count) {
  std::vector<refgame::Context> out;
  for (int c = 0; c < count; ++c) {
    std::vector<std::string> ids;
    for (int i = 0; i < 4; ++i) ids.push_back("c" + std::to_string(c) + "-" + std::to_string(i));
    out.push_back(refgame::Context::from_ids(ids));
  }
  return out;
}

std::map<std::string, std::string> descriptions(const std::vector<refgame::Context>& ctxs) {
  std::map<std::string, std::string> out;
  for (const auto& ctx : ctxs) {
    for (const auto& img : ctx.images()) out[img.id] = img.id + " tall figure leaning left with both arms raised";
  }
  return out;
}

void BM_SimulateGame(benchmark::State& state) {
  const auto ctxs = contexts(1);
  const auto desc = descriptions(ctxs);
  refgame::agents::ConventionSpeaker speaker(desc);
  refgame::agents::AdaptiveListener listener(desc);
  refgame::sim::SimulationConfig cfg;
  cfg.samples_per_trial = static_cast<int>(state.range(0));
  cfg.decoding.n = cfg.samples_per_trial;
  for (auto _ : state) benchmark::DoNotOptimize(refgame::sim::simulate_game(cfg, "g", 1, ctxs[0], speaker, listener));
}
BENCHMARK(BM_SimulateGame)->Arg(1)->Arg(4)->Arg(16);

void BM_RunBatch(benchmark::State& state) {
  refgame::sim::BatchSpec spec;
  spec.contexts = contexts(16);
  spec.parallelism = static_cast<int>(state.range(0));
  const auto desc = descriptions(spec.contexts);
  refgame::agents::ConventionSpeaker speaker(desc);
  refgame::agents::AdaptiveListener listener(desc);
  for (auto _ : state) benchmark::DoNotOptimize(refgame::sim::run_batch(spec, speaker, listener));
}
BENCHMARK(BM_RunBatch)->Arg(1)->Arg(4)->UseRealTime();

}  // namespace
