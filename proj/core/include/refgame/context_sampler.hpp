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

// Similarity-controlled context sampling. A seed image is drawn uniformly;
// the rest are drawn without replacement from a temperature-scaled softmax
// over cosine similarity to the seed.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "refgame/game.hpp"
#include "refgame/rng.hpp"

namespace refgame::sampler {

class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;

  // Normalizes the vector. Throws InputError on a duplicate id, a dimension
  // mismatch, or a zero (or non-finite) vector.
  void add(std::string id, std::span<const double> vec, std::string uri = {});

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::string& id(std::size_t row) const { return ids_[row]; }
  const std::string& uri(std::size_t row) const { return uris_[row]; }
  std::span<const double> vector(std::size_t row) const { return {data_.data() + row * dim_, dim_}; }
  std::optional<std::size_t> row_of(const std::string& id) const;

  // Cosine similarity as a dot product of the stored unit vectors.
  double similarity(std::size_t a, std::size_t b) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::string> uris_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> rows_;
};

// Embedding JSONL: {"id": ..., "vector": [...], "uri"?: ...} per line.
EmbeddingIndex load_embeddings(std::istream& in);
EmbeddingIndex load_embeddings(const std::string& path);

struct ContextSamplingConfig {
  std::size_t k = 4;
  double temperature = 0.05;
  std::uint64_t seed = 0;
  std::size_t count = 1;
};

struct SampledContext {
  Context context;
  double temperature = 0.0;
  std::string seed_image;
};

// Categorical distribution softmax(sim(seed, c) / temperature) over candidate rows.
std::vector<double> selection_probabilities(const EmbeddingIndex& index, std::size_t seed_row,
                                            std::span<const std::size_t> candidates, double temperature);

// Throws InputError when the bank is smaller than k or the temperature is not positive.
SampledContext sample_context(const EmbeddingIndex& index, std::size_t k, double temperature, Rng& rng);

// `per_temperature` contexts for every temperature, in temperature order.
std::vector<SampledContext> sample_context_suite(const EmbeddingIndex& index, std::span<const double> temperatures,
                                                 std::size_t per_temperature, std::size_t k, Rng& rng);

// Context suite JSON: {"contexts":[{id_list, labels, temperature, seed_image, uris}]}.
Json suite_to_json(std::span<const SampledContext> suite);
std::vector<SampledContext> suite_from_json(const Json& j);

}  // namespace refgame::sampler
