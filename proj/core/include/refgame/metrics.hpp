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

// Utterance-level and corpus-level convention metrics: message length,
// word novelty distance/rate, part-of-speech class proportions and
// per-repetition curves.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refgame/game.hpp"
#include "refgame/text.hpp"

namespace refgame::metrics {

using text::TaggedToken;
using text::Tagger;

struct UtteranceAnalysis {
  std::vector<TaggedToken> tokens;
  // Lemmas of tokens whose tag is a content tag, in utterance order.
  std::vector<std::string> content_lemmas;

  std::size_t length() const { return tokens.size(); }
};

// NOUN, ADJ, VERB, ADV, PROPN, NUM, PRON, ADP.
bool is_content_tag(std::string_view pos);

UtteranceAnalysis analyze_utterance(std::string_view text, const Tagger& tagger);
UtteranceAnalysis analyze_tagged(std::vector<TaggedToken> tokens);

// Word novelty distance: fewest insertions plus substitutions turning prev
// into curr when deletions cost nothing.
int wnd(std::span<const std::string> prev, std::span<const std::string> curr);
int wnd(const UtteranceAnalysis& prev, const UtteranceAnalysis& curr);

enum class WnrDenominator { ContentLemmas, Tokens };

std::optional<WnrDenominator> parse_wnr_denominator(std::string_view s);
std::string_view to_string(WnrDenominator d);

// WND over the previous utterance's length; nullopt when that length is 0.
std::optional<double> wnr(const UtteranceAnalysis& prev, const UtteranceAnalysis& curr,
                          WnrDenominator denom = WnrDenominator::ContentLemmas);

// Folds a tag into its part-of-speech class (nouns, verbs, determiners, ...).
// Unknown tags map to "other" and log a warning.
std::string pos_class(std::string_view pos);

// Share of each class over all tokens of the given utterances. Empty input
// yields an empty map.
std::map<std::string, double> pos_class_proportions(std::span<const UtteranceAnalysis> utterances);

struct SummaryStat {
  double mean = 0.0;
  std::optional<double> se;  // sample stddev / sqrt(count); needs count >= 2
  std::size_t count = 0;
};

SummaryStat summarize(std::span<const double> values);

struct RepetitionPoint {
  int repetition = 0;
  SummaryStat accuracy;
  SummaryStat length;
  SummaryStat wnr;  // empty at repetition 0
  SummaryStat response_time_ms;
  std::map<std::string, double> pos_proportions;
};

struct CurveOptions {
  WnrDenominator denominator = WnrDenominator::ContentLemmas;
};

// Tags every utterance once, then groups trials by repetition index.
class CorpusAnalysis {
 public:
  CorpusAnalysis(std::span<const GameState> games, const Tagger& tagger);

  const UtteranceAnalysis& analysis(std::size_t game, std::size_t trial) const { return analyses_[game][trial]; }
  std::span<const GameState> games() const { return games_; }

  std::vector<RepetitionPoint> repetition_curves(const CurveOptions& opts = {}) const;

  // For each game: WND between consecutive descriptions of the same image,
  // averaged over trials in the last `last_blocks` blocks.
  std::optional<double> late_game_wnd(std::size_t game, int last_blocks = 2) const;

  // (previous, current) trial index pairs for consecutive repetitions of an image.
  std::vector<std::pair<std::size_t, std::size_t>> repetition_pairs(std::size_t game) const;

 private:
  std::span<const GameState> games_;
  std::vector<std::vector<UtteranceAnalysis>> analyses_;
};

std::vector<RepetitionPoint> repetition_curves(std::span<const GameState> games, const Tagger& tagger,
                                               const CurveOptions& opts = {});

}  // namespace refgame::metrics
