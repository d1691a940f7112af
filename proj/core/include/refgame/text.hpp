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

// Tokenization and part-of-speech tagging for utterance metrics.

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace refgame::text {

struct TaggedToken {
  std::string surface;
  std::string lemma;
  std::string pos;  // Universal POS tag

  bool operator==(const TaggedToken&) const = default;
};

// The closed tag set the metrics understand.
const std::vector<std::string>& universal_tags();
bool is_universal_tag(std::string_view tag);

// Splits on whitespace and punctuation boundaries. Every punctuation mark is
// its own token; clitics ('s, n't, 're, ...) split off the word they attach to;
// decimal numbers such as 3.5 stay whole.
std::vector<std::string> tokenize(std::string_view text);

// Message length in tokens.
std::size_t token_count(std::string_view text);

class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual std::vector<TaggedToken> tag(std::string_view text) const = 0;
  virtual std::vector<std::vector<TaggedToken>> tag_batch(std::span<const std::string> texts) const;
  virtual std::string name() const = 0;
};

// Deterministic tagger: a frozen surface -> (lemma, tag) lexicon, falling back
// to suffix rules for unknown words.
class LexiconTagger final : public Tagger {
 public:
  struct Entry {
    std::string lemma;
    std::string pos;
  };

  // Lexicon TSV lines: surface<TAB>lemma<TAB>TAG; '#' starts a comment.
  static LexiconTagger from_tsv(std::string_view tsv);
  static LexiconTagger from_file(const std::string& path);
  // Shared instance over the lexicon compiled into the library.
  static const LexiconTagger& builtin();

  std::vector<TaggedToken> tag(std::string_view text) const override;
  std::string name() const override { return "lexicon"; }
  std::size_t lexicon_size() const { return lexicon_.size(); }

 private:
  TaggedToken tag_token(const std::string& surface, bool sentence_initial) const;

  std::unordered_map<std::string, Entry> lexicon_;
};

// External tagger over the JSONL subprocess contract: the command reads
// {"text": ...} lines on stdin and writes {"tokens":[{surface,lemma,pos}]}
// lines on stdout, one per input line, in order.
class SubprocessTagger final : public Tagger {
 public:
  explicit SubprocessTagger(std::string command) : command_(std::move(command)) {}

  std::vector<TaggedToken> tag(std::string_view text) const override;
  std::vector<std::vector<TaggedToken>> tag_batch(std::span<const std::string> texts) const override;
  std::string name() const override { return "subprocess:" + command_; }

 private:
  std::string command_;
};

}  // namespace refgame::text
