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

#include "refgame/text.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "refgame/errors.hpp"
#include "refgame/jsonl.hpp"

namespace refgame::text {

extern const char* const kBuiltinLexiconTsv;  // generated from data/lexicon.tsv

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
// Bytes >= 0x80 are UTF-8 continuation/lead bytes and always count as word characters.
bool is_word_char(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; }
bool is_digit(unsigned char c) { return std::isdigit(c) != 0; }
bool is_alpha(unsigned char c) { return c >= 0x80 || std::isalpha(c) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Splits one whitespace-free chunk.
void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out) {
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    const auto c = static_cast<unsigned char>(chunk[i]);
    if (is_word_char(c)) {
      word.push_back(static_cast<char>(c));
      continue;
    }
    const bool next_digit = i + 1 < chunk.size() && is_digit(static_cast<unsigned char>(chunk[i + 1]));
    if ((c == '.' || c == ',') && !word.empty() && is_digit(static_cast<unsigned char>(word.back())) && next_digit) {
      word.push_back(static_cast<char>(c));
      continue;
    }
    if (c == '\'' && !word.empty()) {
      // Clitic: letters following the apostrophe up to the next non-letter.
      std::size_t j = i + 1;
      while (j < chunk.size() && is_alpha(static_cast<unsigned char>(chunk[j]))) ++j;
      if (j > i + 1) {
        std::string clitic(chunk.substr(i, j - i));
        std::string clitic_lower = lower(clitic);
        if (clitic_lower == "'t" && word.size() > 1 && std::tolower(static_cast<unsigned char>(word.back())) == 'n') {
          word.pop_back();
          flush();
          out.push_back("n" + clitic);
        } else {
          flush();
          out.push_back(std::move(clitic));
        }
        i = j - 1;
        continue;
      }
    }
    flush();
    out.emplace_back(1, static_cast<char>(c));
  }
  flush();
}

bool all_punct(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return c < 0x80 && std::ispunct(c); });
}

bool is_number(std::string_view s) {
  if (s.empty() || !is_digit(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return is_digit(c) || c == '.' || c == ','; });
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// "running" -> "run", "hopped" -> "hop"; leaves "ll"/"ss" endings alone.
std::string undouble(std::string stem) {
  const std::size_t n = stem.size();
  if (n >= 3 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) && stem[n - 1] != 'l' && stem[n - 1] != 's' &&
      stem[n - 1] != 'z') {
    stem.pop_back();
  }
  return stem;
}

}  // namespace

const std::vector<std::string>& universal_tags() {
  static const std::vector<std::string> tags = {"ADJ",  "ADP",  "ADV",   "AUX",   "CCONJ", "DET",
                                                "INTJ", "NOUN", "NUM",   "PART",  "PRON",  "PROPN",
                                                "PUNCT", "SCONJ", "SYM", "VERB",  "X"};
  return tags;
}

bool is_universal_tag(std::string_view tag) {
  const auto& tags = universal_tags();
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) tokenize_chunk(text.substr(i, j - i), out);
    i = j;
  }
  return out;
}

std::size_t token_count(std::string_view text) { return tokenize(text).size(); }

std::vector<std::vector<TaggedToken>> Tagger::tag_batch(std::span<const std::string> texts) const {
  std::vector<std::vector<TaggedToken>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(tag(t));
  return out;
}

LexiconTagger LexiconTagger::from_tsv(std::string_view tsv) {
  LexiconTagger tagger;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string surface, lemma, pos;
    if (!std::getline(fields, surface, '\t') || !std::getline(fields, lemma, '\t') || !std::getline(fields, pos, '\t')) {
      throw InputError("lexicon line " + std::to_string(lineno) + ": expected surface<TAB>lemma<TAB>TAG");
    }
    if (!is_universal_tag(pos)) {
      throw InputError("lexicon line " + std::to_string(lineno) + ": unknown tag '" + pos + "'");
    }
    tagger.lexicon_[lower(surface)] = {lower(lemma), pos};
  }
  return tagger;
}

LexiconTagger LexiconTagger::from_file(const std::string& path) { return from_tsv(read_file(path)); }

const LexiconTagger& LexiconTagger::builtin() {
  static const LexiconTagger tagger = from_tsv(kBuiltinLexiconTsv);
  return tagger;
}

TaggedToken LexiconTagger::tag_token(const std::string& surface, bool sentence_initial) const {
  const std::string w = lower(surface);
  if (all_punct(surface)) {
    static constexpr std::string_view kSymbols = "$%&+=<>#@^~|*/\\";
    const bool sym = surface.size() == 1 && kSymbols.find(surface[0]) != std::string_view::npos;
    return {surface, w, sym ? "SYM" : "PUNCT"};
  }
  if (is_number(surface)) return {surface, w, "NUM"};
  if (auto it = lexicon_.find(w); it != lexicon_.end()) return {surface, it->second.lemma, it->second.pos};

  if (!sentence_initial && std::isupper(static_cast<unsigned char>(surface[0])) != 0) return {surface, w, "PROPN"};

  const std::size_t n = w.size();
  if (n > 4 && ends_with(w, "ly")) return {surface, w, "ADV"};
  if (n > 5 && ends_with(w, "ing")) return {surface, undouble(w.substr(0, n - 3)), "VERB"};
  if (n > 4 && ends_with(w, "ed")) {
    std::string stem = w.substr(0, n - 2);
    if (ends_with(stem, "i")) stem.back() = 'y';
    return {surface, undouble(stem), "VERB"};
  }
  for (std::string_view suf : {"ous", "ful", "ive", "able", "ible", "less", "ish", "ese"}) {
    if (n > suf.size() + 2 && ends_with(w, suf)) return {surface, w, "ADJ"};
  }
  if (n > 3 && ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is")) {
    if (ends_with(w, "ies")) return {surface, w.substr(0, n - 3) + "y", "NOUN"};
    for (std::string_view suf : {"ches", "shes", "xes", "zes", "sses"}) {
      if (ends_with(w, suf)) return {surface, w.substr(0, n - 2), "NOUN"};
    }
    return {surface, w.substr(0, n - 1), "NOUN"};
  }
  return {surface, w, "NOUN"};
}

std::vector<TaggedToken> LexiconTagger::tag(std::string_view text) const {
  std::vector<TaggedToken> out;
  bool sentence_initial = true;
  for (auto& tok : tokenize(text)) {
    out.push_back(tag_token(tok, sentence_initial));
    sentence_initial = tok == "." || tok == "!" || tok == "?";
  }
  return out;
}

std::vector<TaggedToken> SubprocessTagger::tag(std::string_view text) const {
  std::string s(text);
  return tag_batch(std::span<const std::string>(&s, 1)).front();
}

std::vector<std::vector<TaggedToken>> SubprocessTagger::tag_batch(std::span<const std::string> texts) const {
  namespace fs = std::filesystem;
  std::string in_template = (fs::temp_directory_path() / "refgame-tagger-in-XXXXXX").string();
  std::string out_template = (fs::temp_directory_path() / "refgame-tagger-out-XXXXXX").string();
  int in_fd = mkstemp(in_template.data());
  int out_fd = mkstemp(out_template.data());
  if (in_fd < 0 || out_fd < 0) throw TransportError("", "tagger: cannot create temporary files");
  close(in_fd);
  close(out_fd);
  struct Cleanup {
    std::string a, b;
    ~Cleanup() {
      std::error_code ec;
      fs::remove(a, ec);
      fs::remove(b, ec);
    }
  } cleanup{in_template, out_template};

  {
    std::ofstream in(in_template, std::ios::binary);
    for (const auto& t : texts) in << nlohmann::json{{"text", t}}.dump() << '\n';
  }
  const std::string cmd = command_ + " < '" + in_template + "' > '" + out_template + "'";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw TransportError("", "tagger command failed with status " + std::to_string(rc) + ": " + command_);

  std::vector<std::vector<TaggedToken>> out;
  std::ifstream result(out_template, std::ios::binary);
  for_each_jsonl(result, [&](const Json& j, std::size_t line) {
    std::vector<TaggedToken> tokens;
    try {
      for (const auto& t : j.at("tokens")) {
        tokens.push_back({t.at("surface").get<std::string>(), lower(t.value("lemma", t.at("surface").get<std::string>())),
                          t.at("pos").get<std::string>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw TransportError("", "tagger output line " + std::to_string(line) + ": " + e.what());
    }
    out.push_back(std::move(tokens));
  });
  if (out.size() != texts.size()) {
    throw TransportError("", "tagger returned " + std::to_string(out.size()) + " lines for " +
                                 std::to_string(texts.size()) + " inputs");
  }
  return out;
}

}  // namespace refgame::text
