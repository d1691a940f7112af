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

#include "refgame/agents.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "refgame/errors.hpp"
#include "refgame/rng.hpp"

namespace refgame::agents {
namespace {

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

std::string join(std::span<const std::string> ws) {
  std::string out;
  for (const auto& w : ws) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

bool is_word_prefix(std::span<const std::string> prefix, std::span<const std::string> full) {
  return !prefix.empty() && prefix.size() <= full.size() && std::equal(prefix.begin(), prefix.end(), full.begin());
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::map<std::string, std::string> descriptions_from_spec(const Json& spec, const AgentResources& res) {
  if (spec.contains("descriptions")) return spec.at("descriptions").get<std::map<std::string, std::string>>();
  return synthetic_descriptions(res.contexts, spec.value("synthetic_seed", std::uint64_t{0}));
}

std::shared_ptr<ChatClient> client_from_spec(const Json& spec, const AgentResources& res) {
  AgentEndpoint ep = endpoint_from_json(spec.at("endpoint"));
  std::shared_ptr<Transport> transport =
      res.transport_factory ? res.transport_factory(ep) : make_http_transport(ep.base_url);
  return std::make_shared<ChatClient>(std::move(ep), std::move(transport), res.limiter, res.audit);
}

}  // namespace

ModelSpeaker::ModelSpeaker(std::shared_ptr<ChatClient> client, std::optional<DemonstrationGame> demo)
    : client_(std::move(client)), demo_(std::move(demo)) {
  if (demo_) demo_->validate();
}

std::vector<std::string> ModelSpeaker::sample(const SpeakerQuery& q, const DecodingParams& dec) {
  SpeakerPromptOptions opts;
  const auto& stops = client_->endpoint().stop_strings;
  opts.end_marker = stops.empty() ? std::string{} : stops.front();
  auto prompt = build_speaker_prompt(q.context, q.history, q.target, demo_ ? &*demo_ : nullptr, opts);
  return client_->sample_utterances(prompt, dec);
}

Json ModelSpeaker::describe() const {
  Json j = {{"kind", "model"}, {"endpoint", endpoint_to_json(client_->endpoint())}};
  if (demo_) j["demo"] = demo_to_json(*demo_);
  return j;
}

std::string ModelListener::guess(const ListenerQuery& q) {
  Rng rng(q.seed);
  auto prompt = build_listener_prompt(q.context, q.history, q.utterance, rng);
  return listener_guess(*client_, prompt);
}

Json ModelListener::describe() const {
  return {{"kind", "model"}, {"endpoint", endpoint_to_json(client_->endpoint())}};
}

FixedSpeaker::FixedSpeaker(std::vector<std::string> utterances) : utterances_(std::move(utterances)) {
  if (utterances_.empty()) throw InputError("fixed speaker needs at least one utterance");
}

std::vector<std::string> FixedSpeaker::sample(const SpeakerQuery&, const DecodingParams& dec) {
  std::vector<std::string> out;
  for (int i = 0; i < dec.n; ++i) out.push_back(utterances_[static_cast<std::size_t>(i) % utterances_.size()]);
  return out;
}

Json FixedSpeaker::describe() const { return {{"kind", "fixed"}, {"utterances", utterances_}}; }

ConventionSpeaker::ConventionSpeaker(std::map<std::string, std::string> descriptions)
    : descriptions_(std::move(descriptions)) {}

std::vector<std::string> ConventionSpeaker::sample(const SpeakerQuery& q, const DecodingParams& dec) {
  auto it = descriptions_.find(q.target);
  if (it == descriptions_.end()) throw InputError("convention speaker has no description for '" + q.target + "'");
  std::string base = it->second;
  for (auto t = q.history.rbegin(); t != q.history.rend(); ++t) {
    if (t->target == q.target && t->correct()) {
      base = t->utterance;
      break;
    }
  }
  const auto base_words = words(base);
  Rng rng(q.seed);
  std::vector<std::string> out{base};
  while (out.size() < static_cast<std::size_t>(dec.n)) {
    const std::size_t len = 1 + rng.uniform_index(std::max<std::size_t>(base_words.size(), 1));
    out.push_back(join(std::span(base_words).first(std::min(len, base_words.size()))));
  }
  out.resize(static_cast<std::size_t>(dec.n));
  return out;
}

Json ConventionSpeaker::describe() const { return {{"kind", "convention"}, {"descriptions", descriptions_}}; }

MappingListener::MappingListener(std::map<std::string, std::string> mapping, bool fallback_first)
    : mapping_(std::move(mapping)), fallback_first_(fallback_first) {}

std::string MappingListener::guess(const ListenerQuery& q) {
  if (auto it = mapping_.find(q.utterance); it != mapping_.end() && q.context.contains(it->second)) return it->second;
  if (fallback_first_) return q.context.images().front().id;
  throw UnparseableGuess(q.utterance);
}

Json MappingListener::describe() const {
  return {{"kind", "mapping"}, {"mapping", mapping_}, {"fallback_first", fallback_first_}};
}

AdaptiveListener::AdaptiveListener(std::map<std::string, std::string> descriptions)
    : descriptions_(std::move(descriptions)) {}

std::string AdaptiveListener::guess(const ListenerQuery& q) {
  std::map<std::string, std::string> memory;  // utterance -> image
  for (const auto& t : q.history) {
    if (t.correct()) memory.emplace(t.utterance, t.target);
  }
  if (auto it = memory.find(q.utterance); it != memory.end()) return it->second;

  const auto u = words(q.utterance);
  std::vector<std::string> remembered;
  for (const auto& [utt, img] : memory) {
    if (is_word_prefix(u, words(utt)) && std::find(remembered.begin(), remembered.end(), img) == remembered.end()) {
      remembered.push_back(img);
    }
  }
  if (remembered.size() == 1) return remembered.front();

  for (const auto& img : q.context.images()) {
    auto d = descriptions_.find(img.id);
    if (d != descriptions_.end() && is_word_prefix(u, words(d->second))) return img.id;
  }
  return q.context.images().front().id;
}

Json AdaptiveListener::describe() const { return {{"kind", "adaptive"}, {"descriptions", descriptions_}}; }

std::string synthetic_description(const std::string& image_id, std::uint64_t seed) {
  static const std::vector<std::string> kDet = {"a", "the"};
  static const std::vector<std::string> kColor = {"red", "black", "white", "brown"};
  static const std::vector<std::string> kNoun = {"dog", "cat", "kite", "bus", "horse", "bird", "boat", "clock"};
  static const std::vector<std::string> kVerb = {"sitting", "standing", "lying", "flying", "parked", "resting"};
  static const std::vector<std::string> kPrep = {"on", "near", "under", "beside"};
  static const std::vector<std::string> kAdj = {"wooden", "green", "old", "small", "large", "sunny"};
  static const std::vector<std::string> kPlace = {"bench", "field", "street", "beach", "table", "roof", "park"};
  Rng rng(derive_seed(fnv1a(image_id), seed));
  auto pick = [&](const std::vector<std::string>& v) { return v[rng.uniform_index(v.size())]; };
  std::vector<std::string> w = {pick(kDet), pick(kColor), pick(kNoun), pick(kVerb), pick(kPrep), "the"};
  if (rng.uniform_index(2) == 0) w.push_back(pick(kAdj));
  w.push_back(pick(kPlace));
  return join(w);
}

std::map<std::string, std::string> synthetic_descriptions(std::span<const Context> contexts, std::uint64_t seed) {
  std::map<std::string, std::string> out;
  std::set<std::string> used;
  for (const auto& ctx : contexts) {
    for (const auto& img : ctx.images()) {
      if (out.count(img.id)) continue;
      // Redraw on collision so no two images share a description.
      std::string d = synthetic_description(img.id, seed);
      for (std::uint64_t salt = 1; used.count(d); ++salt) d = synthetic_description(img.id, derive_seed(seed, salt));
      used.insert(d);
      out.emplace(img.id, std::move(d));
    }
  }
  return out;
}

std::unique_ptr<Speaker> make_speaker(const Json& spec, const AgentResources& res) {
  try {
    const auto kind = spec.at("kind").get<std::string>();
    if (kind == "model") {
      std::optional<DemonstrationGame> demo;
      if (spec.contains("demo") && !spec.at("demo").is_null()) demo = demo_from_json(spec.at("demo"));
      return std::make_unique<ModelSpeaker>(client_from_spec(spec, res), std::move(demo));
    }
    if (kind == "convention") return std::make_unique<ConventionSpeaker>(descriptions_from_spec(spec, res));
    if (kind == "fixed") return std::make_unique<FixedSpeaker>(spec.at("utterances").get<std::vector<std::string>>());
    throw InputError("unknown speaker kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed speaker spec: ") + e.what());
  }
}

std::unique_ptr<Listener> make_listener(const Json& spec, const AgentResources& res) {
  try {
    const auto kind = spec.at("kind").get<std::string>();
    if (kind == "model") return std::make_unique<ModelListener>(client_from_spec(spec, res));
    if (kind == "adaptive") return std::make_unique<AdaptiveListener>(descriptions_from_spec(spec, res));
    if (kind == "mapping") {
      return std::make_unique<MappingListener>(spec.at("mapping").get<std::map<std::string, std::string>>(),
                                               spec.value("fallback_first", true));
    }
    throw InputError("unknown listener kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed listener spec: ") + e.what());
  }
}

}  // namespace refgame::agents
