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

// Speaker and listener agents. Model-backed agents talk to a served model
// through ChatClient; scripted agents are deterministic stand-ins used for
// tests, smoke runs and replay.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "refgame/chat_client.hpp"
#include "refgame/game.hpp"
#include "refgame/prompt.hpp"

namespace refgame::agents {

struct SpeakerQuery {
  const Context& context;
  std::span<const Trial> history;
  const std::string& target;
  std::uint64_t seed;  // per-trial seed for any sampling the agent does
};

struct ListenerQuery {
  const Context& context;
  std::span<const Trial> history;
  const std::string& utterance;
  std::uint64_t seed;  // drives the second-presentation shuffle
};

class Speaker {
 public:
  virtual ~Speaker() = default;
  // Exactly dec.n utterances.
  virtual std::vector<std::string> sample(const SpeakerQuery& q, const DecodingParams& dec) = 0;
  virtual Json describe() const = 0;
};

class Listener {
 public:
  virtual ~Listener() = default;
  // Image id from the context; throws UnparseableGuess when no label can be read.
  virtual std::string guess(const ListenerQuery& q) = 0;
  virtual Json describe() const = 0;
};

class ModelSpeaker final : public Speaker {
 public:
  ModelSpeaker(std::shared_ptr<ChatClient> client, std::optional<DemonstrationGame> demo);
  std::vector<std::string> sample(const SpeakerQuery& q, const DecodingParams& dec) override;
  Json describe() const override;

 private:
  std::shared_ptr<ChatClient> client_;
  std::optional<DemonstrationGame> demo_;
};

class ModelListener final : public Listener {
 public:
  explicit ModelListener(std::shared_ptr<ChatClient> client) : client_(std::move(client)) {}
  std::string guess(const ListenerQuery& q) override;
  Json describe() const override;

 private:
  std::shared_ptr<ChatClient> client_;
};

// Returns a fixed list of utterances (cycled when n exceeds it).
class FixedSpeaker final : public Speaker {
 public:
  explicit FixedSpeaker(std::vector<std::string> utterances);
  std::vector<std::string> sample(const SpeakerQuery& q, const DecodingParams& dec) override;
  Json describe() const override;

 private:
  std::vector<std::string> utterances_;
};

// Scripted speaker that reuses its conventions. Candidate 0 repeats the most
// recent successful description of the target (the full description before
// any success); the other candidates are word prefixes of it with a length
// drawn uniformly from 1..|base|.
class ConventionSpeaker final : public Speaker {
 public:
  explicit ConventionSpeaker(std::map<std::string, std::string> descriptions);
  std::vector<std::string> sample(const SpeakerQuery& q, const DecodingParams& dec) override;
  Json describe() const override;

 private:
  std::map<std::string, std::string> descriptions_;
};

// Looks the utterance up in a fixed table.
class MappingListener final : public Listener {
 public:
  // fallback_first: unknown utterances go to the first context image
  // instead of raising UnparseableGuess.
  MappingListener(std::map<std::string, std::string> mapping, bool fallback_first);
  std::string guess(const ListenerQuery& q) override;
  Json describe() const override;

 private:
  std::map<std::string, std::string> mapping_;
  bool fallback_first_;
};

// Scripted listener that learns from the game so far: it remembers the first
// successful utterance for every image and resolves later utterances that
// are those utterances or unambiguous word prefixes of them. Otherwise it
// matches word prefixes of its own description of each image, picking the
// first matching image in context order.
class AdaptiveListener final : public Listener {
 public:
  explicit AdaptiveListener(std::map<std::string, std::string> descriptions);
  std::string guess(const ListenerQuery& q) override;
  Json describe() const override;

 private:
  std::map<std::string, std::string> descriptions_;
};

class CallbackSpeaker final : public Speaker {
 public:
  using Fn = std::function<std::vector<std::string>(const SpeakerQuery&, const DecodingParams&)>;
  explicit CallbackSpeaker(Fn fn) : fn_(std::move(fn)) {}
  std::vector<std::string> sample(const SpeakerQuery& q, const DecodingParams& dec) override { return fn_(q, dec); }
  Json describe() const override { return {{"kind", "callback"}}; }

 private:
  Fn fn_;
};

class CallbackListener final : public Listener {
 public:
  using Fn = std::function<std::string(const ListenerQuery&)>;
  explicit CallbackListener(Fn fn) : fn_(std::move(fn)) {}
  std::string guess(const ListenerQuery& q) override { return fn_(q); }
  Json describe() const override { return {{"kind", "callback"}}; }

 private:
  Fn fn_;
};

// Deterministic pseudo-caption for an image id ("a red dog sitting on ...").
// Captions in one bank often share their first words, so short prefixes can
// be ambiguous.
std::string synthetic_description(const std::string& image_id, std::uint64_t seed);

// Synthetic descriptions for every image of every context, distinct across
// the whole bank.
std::map<std::string, std::string> synthetic_descriptions(std::span<const Context> contexts, std::uint64_t seed);

// Shared resources for agents built from configuration.
struct AgentResources {
  std::shared_ptr<RequestLimiter> limiter;
  std::shared_ptr<AuditLog> audit;
  std::function<std::shared_ptr<Transport>(const AgentEndpoint&)> transport_factory;  // defaults to HTTP
  std::span<const Context> contexts;  // for synthetic descriptions
};

// {"kind": "model", "endpoint": {...}, "demo": {...}}
// {"kind": "convention", "descriptions": {...}} or {"kind": "convention", "synthetic_seed": 7}
// {"kind": "fixed", "utterances": [...]}
std::unique_ptr<Speaker> make_speaker(const Json& spec, const AgentResources& res);

// {"kind": "model", "endpoint": {...}}
// {"kind": "adaptive", "descriptions": {...} | "synthetic_seed": 7}
// {"kind": "mapping", "mapping": {...}, "fallback_first": true}
std::unique_ptr<Listener> make_listener(const Json& spec, const AgentResources& res);

}  // namespace refgame::agents
