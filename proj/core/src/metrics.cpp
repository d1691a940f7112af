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

#include "refgame/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace refgame::metrics {

bool is_content_tag(std::string_view pos) {
  static constexpr std::string_view kContent[] = {"NOUN", "ADJ", "VERB", "ADV", "PROPN", "NUM", "PRON", "ADP"};
  return std::find(std::begin(kContent), std::end(kContent), pos) != std::end(kContent);
}

UtteranceAnalysis analyze_tagged(std::vector<TaggedToken> tokens) {
  UtteranceAnalysis a;
  a.tokens = std::move(tokens);
  for (const auto& t : a.tokens) {
    if (is_content_tag(t.pos)) a.content_lemmas.push_back(t.lemma);
  }
  return a;
}

UtteranceAnalysis analyze_utterance(std::string_view text, const Tagger& tagger) {
  return analyze_tagged(tagger.tag(text));
}

int wnd(std::span<const std::string> prev, std::span<const std::string> curr) {
  // cost[j]: cheapest way to produce curr[0..j) from the prev prefix seen so far.
  const std::size_t m = curr.size();
  std::vector<int> row(m + 1);
  std::iota(row.begin(), row.end(), 0);
  std::vector<int> next(m + 1);
  for (const auto& p : prev) {
    next[0] = 0;
    for (std::size_t j = 1; j <= m; ++j) {
      const int del = row[j];
      const int ins = next[j - 1] + 1;
      const int sub = row[j - 1] + (p == curr[j - 1] ? 0 : 1);
      next[j] = std::min({del, ins, sub});
    }
    std::swap(row, next);
  }
  return row[m];
}

int wnd(const UtteranceAnalysis& prev, const UtteranceAnalysis& curr) {
  return wnd(prev.content_lemmas, curr.content_lemmas);
}

std::optional<WnrDenominator> parse_wnr_denominator(std::string_view s) {
  if (s == "content") return WnrDenominator::ContentLemmas;
  if (s == "tokens") return WnrDenominator::Tokens;
  return std::nullopt;
}

std::string_view to_string(WnrDenominator d) {
  return d == WnrDenominator::ContentLemmas ? "content" : "tokens";
}

std::optional<double> wnr(const UtteranceAnalysis& prev, const UtteranceAnalysis& curr, WnrDenominator denom) {
  const std::size_t len = denom == WnrDenominator::ContentLemmas ? prev.content_lemmas.size() : prev.tokens.size();
  if (len == 0) return std::nullopt;
  return static_cast<double>(wnd(prev, curr)) / static_cast<double>(len);
}

std::string pos_class(std::string_view pos) {
  static const std::map<std::string, std::string, std::less<>> kClasses = {
      {"ADJ", "adjectives"},  {"ADP", "prepositions"}, {"ADV", "adverbs"},     {"AUX", "other"},
      {"CCONJ", "conjunctions"}, {"DET", "determiners"}, {"INTJ", "other"},    {"NOUN", "nouns"},
      {"NUM", "other"},       {"PART", "other"},       {"PRON", "pronouns"},   {"PROPN", "nouns"},
      {"PUNCT", "other"},     {"SYM", "other"},        {"VERB", "verbs"},      {"X", "other"},
      {"SCONJ", "conjunctions"}};
  if (auto it = kClasses.find(pos); it != kClasses.end()) return it->second;
  spdlog::warn("unknown POS tag '{}' counted as other", pos);
  return "other";
}

std::map<std::string, double> pos_class_proportions(std::span<const UtteranceAnalysis> utterances) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& u : utterances) {
    for (const auto& t : u.tokens) {
      ++counts[pos_class(t.pos)];
      ++total;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [cls, c] : counts) out[cls] = static_cast<double>(c) / static_cast<double>(total);
  return out;
}

SummaryStat summarize(std::span<const double> values) {
  SummaryStat s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    s.se = sd / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

CorpusAnalysis::CorpusAnalysis(std::span<const GameState> games, const Tagger& tagger) : games_(games) {
  std::vector<std::string> texts;
  for (const auto& g : games) {
    for (const auto& t : g.trials()) texts.push_back(t.utterance);
  }
  auto tagged = tagger.tag_batch(texts);
  std::size_t cursor = 0;
  analyses_.reserve(games.size());
  for (const auto& g : games) {
    std::vector<UtteranceAnalysis> per_game;
    per_game.reserve(g.trials().size());
    for (std::size_t i = 0; i < g.trials().size(); ++i) per_game.push_back(analyze_tagged(std::move(tagged[cursor++])));
    analyses_.push_back(std::move(per_game));
  }
}

std::vector<std::pair<std::size_t, std::size_t>> CorpusAnalysis::repetition_pairs(std::size_t game) const {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::map<std::string, std::size_t> last_seen;
  const auto& trials = games_[game].trials();
  for (std::size_t i = 0; i < trials.size(); ++i) {
    auto it = last_seen.find(trials[i].target);
    if (it != last_seen.end()) pairs.emplace_back(it->second, i);
    last_seen[trials[i].target] = i;
  }
  return pairs;
}

std::vector<RepetitionPoint> CorpusAnalysis::repetition_curves(const CurveOptions& opts) const {
  struct Bucket {
    std::vector<double> acc, len, wnr, rt;
    std::vector<UtteranceAnalysis> utterances;
  };
  std::map<int, Bucket> buckets;
  for (std::size_t g = 0; g < games_.size(); ++g) {
    const auto& trials = games_[g].trials();
    for (std::size_t i = 0; i < trials.size(); ++i) {
      Bucket& b = buckets[trials[i].repetition];
      b.acc.push_back(trials[i].correct() ? 1.0 : 0.0);
      b.len.push_back(static_cast<double>(analyses_[g][i].length()));
      b.utterances.push_back(analyses_[g][i]);
      if (const auto& rt = trials[i].meta.find("response_time_ms"); rt != trials[i].meta.end() && rt->is_number()) {
        b.rt.push_back(rt->get<double>());
      }
    }
    for (auto [prev, curr] : repetition_pairs(g)) {
      if (auto r = wnr(analyses_[g][prev], analyses_[g][curr], opts.denominator)) {
        buckets[trials[curr].repetition].wnr.push_back(*r);
      }
    }
  }
  std::vector<RepetitionPoint> out;
  for (auto& [rep, b] : buckets) {
    RepetitionPoint p;
    p.repetition = rep;
    p.accuracy = summarize(b.acc);
    p.length = summarize(b.len);
    p.wnr = summarize(b.wnr);
    p.response_time_ms = summarize(b.rt);
    p.pos_proportions = pos_class_proportions(b.utterances);
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<double> CorpusAnalysis::late_game_wnd(std::size_t game, int last_blocks) const {
  const auto& g = games_[game];
  const int k = static_cast<int>(g.context().size());
  const int blocks = static_cast<int>(g.trials().size()) / k;
  const int first_block = std::max(0, blocks - last_blocks);
  std::vector<double> values;
  for (auto [prev, curr] : repetition_pairs(game)) {
    if (g.trials()[curr].block_index >= first_block) {
      values.push_back(static_cast<double>(wnd(analyses_[game][prev], analyses_[game][curr])));
    }
  }
  if (values.empty()) return std::nullopt;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

std::vector<RepetitionPoint> repetition_curves(std::span<const GameState> games, const Tagger& tagger,
                                               const CurveOptions& opts) {
  return CorpusAnalysis(games, tagger).repetition_curves(opts);
}

}  // namespace refgame::metrics
