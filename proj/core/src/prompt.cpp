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

#include "refgame/prompt.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "refgame/errors.hpp"

namespace refgame::agents {
namespace {

PromptPart text_part(std::string s) { return {PromptPart::Kind::Text, std::move(s), {}, {}}; }
PromptPart image_part(const ImageRef& img) { return {PromptPart::Kind::Image, {}, img.uri, img.id}; }

// "Image A: <image> Image B: <image> ..." in the given order with the given labels.
void present_images(std::vector<PromptPart>& parts, std::span<const ImageRef* const> images,
                    std::span<const std::string> labels, std::string lead) {
  for (std::size_t i = 0; i < images.size(); ++i) {
    parts.push_back(text_part(lead + (i == 0 ? "" : " ") + "Image " + labels[i] + ": "));
    parts.push_back(image_part(*images[i]));
    lead.clear();
  }
}

void present_context(std::vector<PromptPart>& parts, const Context& ctx, std::string lead = {}) {
  std::vector<const ImageRef*> imgs;
  std::vector<std::string> labels;
  for (const auto& img : ctx.images()) {
    imgs.push_back(&img);
    labels.push_back(img.label);
  }
  present_images(parts, imgs, labels, std::move(lead));
}

std::string guess_label(const Context& ctx, const std::string& guess) {
  const ImageRef* img = ctx.find(guess);
  return img == nullptr ? "?" : img->label;
}

}  // namespace

std::string PromptBundle::flat_text() const {
  std::string out;
  for (const auto& m : messages) {
    for (const auto& p : m.parts) out += p.kind == PromptPart::Kind::Text ? p.text : "<image>";
  }
  return out;
}

std::size_t PromptBundle::image_part_count() const {
  std::size_t n = 0;
  for (const auto& m : messages) {
    n += static_cast<std::size_t>(std::count_if(m.parts.begin(), m.parts.end(),
                                                [](const PromptPart& p) { return p.kind == PromptPart::Kind::Image; }));
  }
  return n;
}

const std::string* PromptBundle::image_for_label(std::string_view label) const {
  for (std::size_t i = 0; i < candidate_labels.size(); ++i) {
    if (candidate_labels[i] == label) return &candidate_images[i];
  }
  return nullptr;
}

void DemonstrationGame::validate() const {
  if (captions.size() != context.size()) {
    throw InputError("demonstration game needs one caption per image (" + std::to_string(context.size()) +
                     "), got " + std::to_string(captions.size()));
  }
  if (repeat && *repeat >= context.size()) throw InputError("demonstration repeat index out of range");
}

DemonstrationGame demo_from_json(const Json& j) {
  try {
    std::vector<ImageRef> images;
    for (const auto& img : j.at("images")) {
      images.push_back({img.at("id").get<std::string>(), img.at("label").get<std::string>(),
                        img.value("uri", img.at("id").get<std::string>())});
    }
    DemonstrationGame demo{Context(std::move(images)), j.at("captions").get<std::vector<std::string>>(), std::nullopt};
    if (j.contains("repeat") && !j.at("repeat").is_null()) demo.repeat = j.at("repeat").get<std::size_t>();
    demo.validate();
    return demo;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed demonstration game: ") + e.what());
  }
}

Json demo_to_json(const DemonstrationGame& demo) {
  Json images = Json::array();
  for (const auto& img : demo.context.images()) images.push_back({{"id", img.id}, {"label", img.label}, {"uri", img.uri}});
  Json j = {{"images", std::move(images)}, {"captions", demo.captions}};
  if (demo.repeat) j["repeat"] = *demo.repeat;
  return j;
}

PromptBundle build_speaker_prompt(const Context& context, std::span<const Trial> history, const std::string& target,
                                  const DemonstrationGame* demo, const SpeakerPromptOptions& opts) {
  const std::string& target_label = context.label_of(target);
  const std::string& eom = opts.end_marker;
  std::vector<PromptPart> parts;

  if (demo != nullptr) {
    demo->validate();
    std::set<std::string> main_labels;
    for (const auto& img : context.images()) main_labels.insert(img.label);
    for (const auto& img : demo->context.images()) {
      if (main_labels.count(img.label) != 0) {
        throw InputError("demonstration label '" + img.label + "' collides with a main-game label");
      }
    }
    present_context(parts, demo->context);
    std::string lines = "\n";
    auto describe = [&](std::size_t i) {
      const auto& label = demo->context.images()[i].label;
      lines += "Target: " + label + "\nDescription: " + demo->captions[i] + eom + "\nGuess: " + label + "\n";
    };
    for (std::size_t i = 0; i < demo->captions.size(); ++i) describe(i);
    if (demo->repeat) describe(*demo->repeat);
    lines += "\n";
    parts.push_back(text_part(std::move(lines)));
  }

  present_context(parts, context);
  std::string lines = "\n";
  for (const auto& t : history) {
    lines += "Target: " + context.label_of(t.target) + "\nDescription: " + t.utterance + eom +
             "\nGuess: " + guess_label(context, t.guess) + "\n";
  }
  lines += "Target: " + target_label + "\nDescription:";
  parts.push_back(text_part(std::move(lines)));

  PromptBundle bundle;
  bundle.messages.push_back({"user", std::move(parts)});
  bundle.target_label = target_label;
  return bundle;
}

PromptBundle build_listener_prompt(const Context& context, std::span<const Trial> history,
                                   const std::string& utterance, Rng& shuffle_rng) {
  std::vector<PromptPart> parts;
  present_context(parts, context);

  std::string lines = "\n";
  for (const auto& t : history) {
    lines += "Description: " + t.utterance + "\nGuess: " + guess_label(context, t.guess) +
             "\nTarget: " + guess_label(context, t.target) + "\n";
  }
  parts.push_back(text_part(std::move(lines)));

  std::vector<std::size_t> order(context.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle_rng.shuffle(std::span<std::size_t>(order));
  std::vector<const ImageRef*> shuffled;
  std::vector<std::string> labels;
  PromptBundle bundle;
  for (std::size_t i = 0; i < order.size(); ++i) {
    shuffled.push_back(&context.images()[order[i]]);
    labels.push_back(context.images()[i].label);
    bundle.candidate_labels.push_back(context.images()[i].label);
    bundle.candidate_images.push_back(context.images()[order[i]].id);
  }
  present_images(parts, shuffled, labels, "\n");
  parts.push_back(text_part("\nDescription: " + utterance + "\nGuess:"));
  bundle.messages.push_back({"user", std::move(parts)});
  return bundle;
}

Json prompt_messages_to_json(const std::vector<PromptMessage>& messages) {
  Json out = Json::array();
  for (const auto& m : messages) {
    Json content = Json::array();
    for (const auto& p : m.parts) {
      if (p.kind == PromptPart::Kind::Text) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        content.push_back({{"type", "image"}, {"image_id", p.image_id}, {"uri", p.image_uri}});
      }
    }
    out.push_back({{"role", m.role}, {"content", std::move(content)}});
  }
  return out;
}

std::vector<PromptMessage> prompt_messages_from_json(const Json& j) {
  std::vector<PromptMessage> out;
  for (const auto& m : j) {
    PromptMessage msg{m.at("role").get<std::string>(), {}};
    for (const auto& c : m.at("content")) {
      if (c.at("type") == "text") {
        msg.parts.push_back(text_part(c.at("text").get<std::string>()));
      } else {
        msg.parts.push_back({PromptPart::Kind::Image, {}, c.at("uri").get<std::string>(), c.at("image_id").get<std::string>()});
      }
    }
    out.push_back(std::move(msg));
  }
  return out;
}

}  // namespace refgame::agents
