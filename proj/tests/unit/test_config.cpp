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

#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "refgame/config.hpp"
#include "refgame/errors.hpp"

namespace refgame::config {
namespace {

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Defaults, MirrorStandardSetup) {
  const auto sim = defaults_for("simulate");
  EXPECT_EQ(sim["n"], 4);
  EXPECT_EQ(sim["trials"], 20);
  EXPECT_EQ(sim["policy"], "uniform");
  EXPECT_EQ(defaults_for("sample-contexts")["temps"], Json::array({0.01, 0.02, 0.03, 0.04, 0.05}));
  EXPECT_EQ(defaults_for("sample-contexts")["per_temp"], 100);
  EXPECT_EQ(defaults_for("build-prefs")["condition"], "success+cost");
  EXPECT_EQ(defaults_for("analyze")["wnr_denominator"], "content");
  EXPECT_EQ(defaults_for("serve")["rt_cap_ms"], 600000);
  EXPECT_THROW(defaults_for("train"), InputError);
  for (const auto& s : subcommands()) EXPECT_NO_THROW(defaults_for(s));
}

TEST(MergeStrict, UnknownKeysNamePath) {
  auto base = defaults_for("simulate");
  try {
    merge_strict(base, {{"decoding", {{"temprature", 0.5}}}});
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("decoding.temprature"), std::string::npos) << e.what();
  }
  EXPECT_THROW(merge_strict(base, {{"bogus", 1}}), InputError);
}

TEST(MergeStrict, NestedMergeAndOpaqueReplace) {
  auto base = defaults_for("simulate");
  merge_strict(base, {{"decoding", {{"temperature", 0.5}}}, {"speaker", {{"kind", "fixed"}, {"utterances", {"x"}}}}});
  EXPECT_EQ(base["decoding"]["temperature"], 0.5);
  EXPECT_EQ(base["decoding"]["top_p"], 0.95);
  EXPECT_EQ(base["speaker"], (Json{{"kind", "fixed"}, {"utterances", {"x"}}}));
}

TEST(RunConfig, FileThenOverrides) {
  refgame::testing::TempDir dir;
  const auto path = dir / "cfg.json";
  std::ofstream(path) << R"({"simulate": {"n": 2, "seed": 9, "decoding": {"top_p": 0.5}}})";
  const auto rc = load_run_config("simulate", path, {{"seed", 11}});
  EXPECT_EQ(rc.at("n"), 2);
  EXPECT_EQ(rc.at("seed"), 11);
  EXPECT_EQ(rc.values["decoding"]["top_p"], 0.5);
  EXPECT_EQ(rc.effective()["config_hash"], rc.hash());

  std::ofstream(dir / "bare.json") << R"({"n": 3})";
  EXPECT_EQ(load_run_config("simulate", dir / "bare.json", nullptr).at("n"), 3);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_THROW(load_run_config("simulate", dir / "broken.json", nullptr), InputError);
  EXPECT_THROW(load_run_config("simulate", dir / "missing.json", nullptr), InputError);
}

TEST(RunConfig, HashCoversParametersNotOutputs) {
  const auto a = load_run_config("simulate", std::nullopt, {{"seed", 1}});
  const auto b = load_run_config("simulate", std::nullopt, {{"seed", 2}});
  const auto c = load_run_config("simulate", std::nullopt, {{"seed", 1}, {"out_dir", "elsewhere"}});
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.hash(), c.hash());
  EXPECT_EQ(a.hash(), load_run_config("simulate", std::nullopt, {{"seed", 1}, {"parallelism", 8}}).hash());
  EXPECT_EQ(a.hash().size(), 64u);
  // Key order in the input does not matter.
  const auto d = load_run_config("simulate", std::nullopt, {{"decoding", {{"top_p", 0.9}, {"temperature", 0.7}}}});
  const auto e = load_run_config("simulate", std::nullopt, {{"decoding", {{"temperature", 0.7}, {"top_p", 0.9}}}});
  EXPECT_EQ(d.hash(), e.hash());
  // Same values under another subcommand hash differently.
  EXPECT_NE(load_run_config("analyze", std::nullopt, nullptr).hash(), load_run_config("build-prefs", std::nullopt, nullptr).hash());
  EXPECT_THROW(a.at("nonexistent"), InputError);
}

}  // namespace
}  // namespace refgame::config
