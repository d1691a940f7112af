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

#include <set>

#include <gtest/gtest.h>

#include "refgame/agents.hpp"
#include "refgame/errors.hpp"
#include "stub_transport.hpp"

namespace refgame::agents {
namespace {

Context abcd() { return Context::from_ids({"dog", "cat", "kite", "bus"}); }

const DecodingParams kN4{1.0, 0.95, 4, 64};

TEST(FixedSpeaker, ReturnsListVerbatim) {
  FixedSpeaker s({"one", "two", "three", "four"});
  const auto ctx = abcd();
  const std::string target = "dog";
  EXPECT_EQ(s.sample({ctx, {}, target, 0}, kN4), (std::vector<std::string>{"one", "two", "three", "four"}));
  FixedSpeaker dup({"same"});
  EXPECT_EQ(dup.sample({ctx, {}, target, 0}, kN4), std::vector<std::string>(4, "same"));
  EXPECT_THROW(FixedSpeaker({}), InputError);
}

TEST(MappingListener, LooksUpUtterance) {
  MappingListener l({{"the striped one", "kite"}}, false);
  const auto ctx = abcd();
  const std::string u = "the striped one", other = "no idea";
  EXPECT_EQ(l.guess({ctx, {}, u, 0}), "kite");
  EXPECT_THROW(l.guess({ctx, {}, other, 0}), UnparseableGuess);
  MappingListener fb({}, true);
  EXPECT_EQ(fb.guess({ctx, {}, other, 0}), "dog");
}

TEST(ConventionSpeaker, FirstCandidateIsConventionOthersPrefixes) {
  ConventionSpeaker s({{"dog", "a brown dog on the grass"}, {"cat", "a cat"}});
  const auto ctx = abcd();
  const std::string target = "dog";
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto out = s.sample({ctx, {}, target, seed}, kN4);
    ASSERT_EQ(out.size(), 4u);
    EXPECT_EQ(out[0], "a brown dog on the grass");
    for (const auto& u : out) EXPECT_TRUE(std::string("a brown dog on the grass").starts_with(u)) << u;
    EXPECT_EQ(out, s.sample({ctx, {}, target, seed}, kN4));
  }
  // After a success the realized utterance becomes the base.
  std::vector<Trial> history{{"dog", "a brown dog", "dog", 0, 0, Json::object()},
                             {"dog", "a brown", "cat", 1, 1, Json::object()}};
  EXPECT_EQ(s.sample({ctx, history, target, 1}, kN4)[0], "a brown dog");
  const std::string missing = "bus";
  EXPECT_THROW(s.sample({ctx, {}, missing, 0}, kN4), InputError);
}

TEST(AdaptiveListener, RemembersSuccessfulUtterances) {
  AdaptiveListener l({{"dog", "a brown dog"}, {"cat", "a black cat"}, {"kite", "a red kite"}, {"bus", "a red bus"}});
  const auto ctx = abcd();
  auto guess = [&](const std::string& u, const std::vector<Trial>& h = {}) { return l.guess({ctx, h, u, 0}); };
  EXPECT_EQ(guess("a black"), "cat");
  EXPECT_EQ(guess("a red bus"), "bus");
  // Ambiguous prefix: first matching image in context order.
  EXPECT_EQ(guess("a red"), "kite");
  EXPECT_EQ(guess("nothing like it"), "dog");
  // "a red" was accepted for the bus; it now means the bus.
  std::vector<Trial> h{{"bus", "a red", "bus", 0, 0, Json::object()}};
  EXPECT_EQ(guess("a red", h), "bus");
}

TEST(SyntheticDescriptions, DeterministicAndUniqueAcrossBank) {
  std::vector<Context> contexts;
  for (int c = 0; c < 50; ++c) {
    std::vector<std::string> ids;
    for (int i = 0; i < 4; ++i) ids.push_back("img-" + std::to_string(c * 4 + i));
    contexts.push_back(Context::from_ids(ids));
  }
  const auto a = synthetic_descriptions(contexts, 7);
  EXPECT_EQ(a, synthetic_descriptions(contexts, 7));
  EXPECT_EQ(a.size(), 200u);
  std::set<std::string> distinct;
  for (const auto& [id, d] : a) distinct.insert(d);
  EXPECT_EQ(distinct.size(), 200u);
  EXPECT_EQ(synthetic_description("img-3", 1), synthetic_description("img-3", 1));
}

TEST(ModelSpeaker, SamplesThroughClient) {
  auto t = std::make_shared<testing::StubTransport>(
      [](const Json&, int) { return testing::choices_response({"a dog<EOM>", "dog", "a dog", "a dog"}); });
  ModelSpeaker s(std::make_shared<ChatClient>(testing::stub_endpoint(), t), std::nullopt);
  const auto ctx = abcd();
  const std::string target = "dog";
  EXPECT_EQ(s.sample({ctx, {}, target, 0}, kN4), (std::vector<std::string>{"a dog", "dog", "a dog", "a dog"}));
  EXPECT_EQ(t->requests[0]["n"], 4);
  EXPECT_EQ(s.describe()["kind"], "model");
}

TEST(ModelListener, PermutationDeterminedBySeed) {
  // Always answers label A; the image behind A depends on the shuffle seed.
  auto t = std::make_shared<testing::StubTransport>([](const Json&, int) { return testing::logprob_response({{"A", -0.1}}); });
  ModelListener l(std::make_shared<ChatClient>(testing::stub_endpoint(), t));
  const auto ctx = abcd();
  const std::string u = "a kite";
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto g = l.guess({ctx, {}, u, seed});
    EXPECT_EQ(g, l.guess({ctx, {}, u, seed}));
    EXPECT_TRUE(ctx.contains(g));
    seen.insert(g);
  }
  EXPECT_EQ(seen.size(), 4u);
}

TEST(Factory, BuildsFromSpecs) {
  std::vector<Context> contexts{abcd()};
  AgentResources res;
  res.contexts = contexts;
  res.transport_factory = [](const AgentEndpoint&) {
    return std::make_shared<testing::StubTransport>([](const Json&, int) { return testing::choices_response({"x"}); });
  };
  EXPECT_EQ(make_speaker({{"kind", "fixed"}, {"utterances", {"a"}}}, res)->describe()["kind"], "fixed");
  EXPECT_EQ(make_speaker({{"kind", "convention"}, {"synthetic_seed", 3}}, res)->describe()["descriptions"].size(), 4u);
  EXPECT_EQ(make_speaker({{"kind", "model"}, {"endpoint", {{"base_url", "http://x"}}}}, res)->describe()["kind"], "model");
  EXPECT_EQ(make_listener({{"kind", "adaptive"}, {"synthetic_seed", 3}}, res)->describe()["kind"], "adaptive");
  EXPECT_EQ(make_listener({{"kind", "mapping"}, {"mapping", {{"u", "dog"}}}}, res)->describe()["kind"], "mapping");
  EXPECT_THROW(make_speaker({{"kind", "telepathic"}}, res), InputError);
  EXPECT_THROW(make_listener({{"nokind", 1}}, res), InputError);
  EXPECT_THROW(make_speaker({{"kind", "model"}}, res), InputError);
}

}  // namespace
}  // namespace refgame::agents
