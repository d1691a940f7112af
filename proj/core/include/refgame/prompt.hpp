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

#pragma once

// Prompt assembly for speaker and listener models.
//
// Speaker prompts present every image once ("Image A: <image> ...") and then
// refer to images by label only. A demonstration game with its own labels
// (M, N, O, P by default) precedes the main game. Listener prompts show the
// images a second time, shuffled and relabeled, right before the queried
// description, so that the listener cannot answer by matching labels from
// earlier trials.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refgame/game.hpp"
#include "refgame/rng.hpp"

namespace refgame::agents {

struct PromptPart {
  enum class Kind { Text, Image };
  Kind kind = Kind::Text;
  std::string text;       // Kind::Text
  std::string image_uri;  // Kind::Image
  std::string image_id;   // Kind::Image

  bool operator==(const PromptPart&) const = default;
};

struct PromptMessage {
  std::string role;
  std::vector<PromptPart> parts;

  bool operator==(const PromptMessage&) const = default;
};

struct PromptBundle {
  std::vector<PromptMessage> messages;
  // Speaker prompts: label of the target in the main game.
  std::string target_label;
  // Listener prompts: labels of the final (shuffled) presentation and the
  // image each one denotes, in label order.
  std::vector<std::string> candidate_labels;
  std::vector<std::string> candidate_images;

  // Concatenated text parts with "<image>" placeholders.
  std::string flat_text() const;
  std::size_t image_part_count() const;
  // Image for a listener answer label; nullptr when the label is not a candidate.
  const std::string* image_for_label(std::string_view label) const;
};

struct DemonstrationGame {
  Context context;  // labels must differ from the main game's
  std::vector<std::string> captions;  // one per context image
  // At most one repeated reference: index of the image described again at the end.
  std::optional<std::size_t> repeat;

  // Throws InputError on caption count mismatch or an out-of-range repeat.
  void validate() const;
};

// Reads {"images":[{id,label,uri}], "captions":[...], "repeat"?: index}.
DemonstrationGame demo_from_json(const Json& j);
Json demo_to_json(const DemonstrationGame& demo);

struct SpeakerPromptOptions {
  // Appended to every demonstration and history description; empty disables.
  std::string end_marker = "<EOM>";
};

// Throws GameError when the target is not in the context, and InputError when
// demonstration labels collide with main-game labels.
PromptBundle build_speaker_prompt(const Context& context, std::span<const Trial> history, const std::string& target,
                                  const DemonstrationGame* demo, const SpeakerPromptOptions& opts = {});

// The second presentation order is a permutation drawn from shuffle_rng.
PromptBundle build_listener_prompt(const Context& context, std::span<const Trial> history,
                                   const std::string& utterance, Rng& shuffle_rng);

Json prompt_messages_to_json(const std::vector<PromptMessage>& messages);
std::vector<PromptMessage> prompt_messages_from_json(const Json& j);

}  // namespace refgame::agents
