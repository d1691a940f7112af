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

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "refgame/errors.hpp"
#include "refgame/prompt.hpp"

namespace refgame::agents {
namespace {

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

Context abcd() { return Context::from_ids({"dog", "cat", "kite", "bus"}); }

std::vector<Trial> history(int n) {
  const std::vector<std::string> ids{"dog", "cat", "kite", "bus"};
  std::vector<Trial> out;
  for (int i = 0; i < n; ++i) out.push_back({ids[i % 4], "desc " + std::to_string(i), ids[(i + 1) % 4]});
  return out;
}

DemonstrationGame demo() {
  return {Context::from_ids({"d1", "d2", "d3", "d4"}, "M"), {"a cow", "a sheep", "a goat", "a pig"}, 1};
}

TEST(SpeakerPrompt, EmptyHistoryEndsWithTarget) {
  const auto b = build_speaker_prompt(abcd(), {}, "cat", nullptr);
  EXPECT_EQ(b.target_label, "B");
  EXPECT_EQ(b.image_part_count(), 4u);
  const auto& last = b.messages.back().parts.back();
  ASSERT_EQ(last.kind, PromptPart::Kind::Text);
  EXPECT_NE(last.text.find("Target: B"), std::string::npos);
  EXPECT_TRUE(b.flat_text().starts_with("Image A: <image> Image B: <image> Image C: <image> Image D: <image>"));
}

TEST(SpeakerPrompt, HistoryRenderedInOrder) {
  const auto h = history(4);
  const auto text = build_speaker_prompt(abcd(), h, "dog", nullptr).flat_text();
  EXPECT_EQ(count(text, "Description: desc"), 4u);
  std::size_t prev = 0;
  for (int i = 0; i < 4; ++i) {
    const auto pos = text.find("Description: desc " + std::to_string(i) + "<EOM>");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_GT(pos, prev);
    prev = pos;
  }
  EXPECT_NE(text.find("Target: A\nDescription: desc 0<EOM>\nGuess: B"), std::string::npos);
}

TEST(SpeakerPrompt, DemonstrationUsesOwnLabels) {
  const auto d = demo();
  const auto b = build_speaker_prompt(abcd(), {}, "bus", &d);
  const auto text = b.flat_text();
  EXPECT_EQ(b.image_part_count(), 8u);
  for (const char* l : {"M", "N", "O", "P", "A", "B", "C", "D"}) EXPECT_EQ(count(text, std::string("Image ") + l + ":"), 1u) << l;
  // Repeat re-describes image N.
  EXPECT_EQ(count(text, "Description: a sheep<EOM>"), 2u);
  for (const char* l : {"M", "N", "O", "P"}) {
    EXPECT_EQ(text.find(std::string("Target: ") + l, text.find("Image A:")), std::string::npos);
  }
}

TEST(SpeakerPrompt, Errors) {
  auto clash = demo();
  clash.context = Context::from_ids({"d1", "d2", "d3", "d4"}, "B");
  EXPECT_THROW(build_speaker_prompt(abcd(), {}, "bus", &clash), InputError);
  EXPECT_THROW(build_speaker_prompt(abcd(), {}, "zebra", nullptr), GameError);
  auto short_demo = demo();
  short_demo.captions.pop_back();
  EXPECT_THROW(build_speaker_prompt(abcd(), {}, "bus", &short_demo), InputError);
}

TEST(SpeakerPrompt, EndMarkerConfigurable) {
  const auto h = history(1);
  const auto text = build_speaker_prompt(abcd(), h, "cat", nullptr, {""}).flat_text();
  EXPECT_EQ(text.find("<EOM>"), std::string::npos);
}

TEST(ListenerPrompt, ShuffleIsSeededBijection) {
  const auto ctx = abcd();
  std::set<std::vector<std::string>> perms;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng r1(seed), r2(seed);
    const auto a = build_listener_prompt(ctx, {}, "a dog", r1);
    const auto b = build_listener_prompt(ctx, {}, "a dog", r2);
    EXPECT_EQ(a.candidate_images, b.candidate_images);
    EXPECT_EQ(a.candidate_labels, (std::vector<std::string>{"A", "B", "C", "D"}));
    auto sorted = a.candidate_images;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<std::string>{"bus", "cat", "dog", "kite"}));
    perms.insert(a.candidate_images);
    // The second presentation shows images in candidate order.
    std::vector<std::string> shown;
    for (const auto& p : a.messages.back().parts) {
      if (p.kind == PromptPart::Kind::Image) shown.push_back(p.image_id);
    }
    ASSERT_EQ(shown.size(), 8u);
    EXPECT_EQ(std::vector<std::string>(shown.begin() + 4, shown.end()), a.candidate_images);
    EXPECT_EQ(*a.image_for_label("C"), a.candidate_images[2]);
    EXPECT_EQ(a.image_for_label("Q"), nullptr);
  }
  EXPECT_EQ(perms.size(), 24u);
}

TEST(ListenerPrompt, RendersHistoryThenQuery) {
  Rng rng(4);
  const auto h = history(3);
  const auto b = build_listener_prompt(abcd(), h, "the striped one", rng);
  const auto text = b.flat_text();
  EXPECT_EQ(count(text, "Description: "), 4u);
  EXPECT_TRUE(text.ends_with("Description: the striped one\nGuess:"));
}

TEST(PromptMessages, JsonRoundTrip) {
  const auto d = demo();
  const auto b = build_speaker_prompt(abcd(), history(2), "kite", &d);
  EXPECT_EQ(prompt_messages_from_json(prompt_messages_to_json(b.messages)), b.messages);
}

TEST(Demo, JsonRoundTrip) {
  const auto d = demo();
  const auto back = demo_from_json(demo_to_json(d));
  EXPECT_EQ(back.context, d.context);
  EXPECT_EQ(back.captions, d.captions);
  EXPECT_EQ(back.repeat, d.repeat);
  EXPECT_THROW(demo_from_json(Json{{"images", Json::array()}}), InputError);
}

}  // namespace
}  // namespace refgame::agents
