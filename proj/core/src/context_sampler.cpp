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

#include "refgame/context_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "refgame/errors.hpp"
#include "refgame/jsonl.hpp"

namespace refgame::sampler {
namespace {

constexpr double kNormTolerance = 1e-6;

std::vector<double> softmax_over(std::span<const double> sims, std::span<const std::size_t> candidates,
                                 double temperature) {
  std::vector<double> logits(candidates.size());
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    logits[i] = sims[candidates[i]] / temperature;
    max_logit = std::max(max_logit, logits[i]);
  }
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - max_logit);
    total += l;
  }
  for (double& l : logits) l /= total;
  return logits;
}

std::size_t draw(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cum += probs[i];
    last_positive = i;
    if (u < cum) return i;
  }
  return last_positive;  // rounding left u above the final cumulative sum
}

}  // namespace

void EmbeddingIndex::add(std::string id, std::span<const double> vec, std::string uri) {
  if (rows_.count(id) != 0) throw InputError("duplicate embedding id '" + id + "'");
  if (vec.empty()) throw InputError("embedding '" + id + "' is empty");
  if (ids_.empty()) {
    dim_ = vec.size();
  } else if (vec.size() != dim_) {
    throw InputError("embedding '" + id + "' has dimension " + std::to_string(vec.size()) + ", expected " +
                     std::to_string(dim_));
  }
  double norm2 = 0.0;
  for (double v : vec) norm2 += v * v;
  const double norm = std::sqrt(norm2);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw InputError("embedding '" + id + "' is a zero or non-finite vector");
  double check = 0.0;
  for (double v : vec) {
    data_.push_back(v / norm);
    check += (v / norm) * (v / norm);
  }
  if (std::fabs(std::sqrt(check) - 1.0) > kNormTolerance) {
    data_.resize(data_.size() - vec.size());
    throw InputError("embedding '" + id + "' could not be normalized");
  }
  rows_.emplace(id, ids_.size());
  uris_.push_back(uri.empty() ? id : std::move(uri));
  ids_.push_back(std::move(id));
}

std::optional<std::size_t> EmbeddingIndex::row_of(const std::string& id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

double EmbeddingIndex::similarity(std::size_t a, std::size_t b) const {
  auto va = vector(a);
  auto vb = vector(b);
  double dot = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) dot += va[i] * vb[i];
  return dot;
}

EmbeddingIndex load_embeddings(std::istream& in) {
  EmbeddingIndex index;
  for_each_jsonl(in, [&](const Json& j, std::size_t line) {
    try {
      auto id = j.at("id").get<std::string>();
      auto vec = j.at("vector").get<std::vector<double>>();
      index.add(std::move(id), vec, j.value("uri", std::string{}));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("embeddings line " + std::to_string(line) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError("embeddings line " + std::to_string(line) + ": " + e.what());
    }
  });
  return index;
}

EmbeddingIndex load_embeddings(const std::string& path) {
  auto in = open_input(path);
  return load_embeddings(in);
}

std::vector<double> selection_probabilities(const EmbeddingIndex& index, std::size_t seed_row,
                                            std::span<const std::size_t> candidates, double temperature) {
  if (!(temperature > 0.0)) throw InputError("temperature must be positive");
  std::vector<double> sims(index.size());
  for (std::size_t c : candidates) sims[c] = index.similarity(seed_row, c);
  return softmax_over(sims, candidates, temperature);
}

SampledContext sample_context(const EmbeddingIndex& index, std::size_t k, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw InputError("temperature must be positive");
  if (k < 2) throw InputError("context size must be at least 2");
  if (index.size() < k) {
    throw InputError("image bank has " + std::to_string(index.size()) + " images, fewer than k=" + std::to_string(k));
  }
  const std::size_t seed_row = rng.uniform_index(index.size());
  std::vector<double> sims(index.size());
  std::vector<std::size_t> remaining;
  remaining.reserve(index.size() - 1);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (r == seed_row) continue;
    sims[r] = index.similarity(seed_row, r);
    remaining.push_back(r);
  }
  std::vector<std::size_t> chosen{seed_row};
  while (chosen.size() < k) {
    auto probs = softmax_over(sims, remaining, temperature);
    const std::size_t pick = draw(probs, rng);
    chosen.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  std::vector<ImageRef> images;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    images.push_back({index.id(chosen[i]), label_for_index(i), index.uri(chosen[i])});
  }
  return {Context(std::move(images)), temperature, index.id(seed_row)};
}

std::vector<SampledContext> sample_context_suite(const EmbeddingIndex& index, std::span<const double> temperatures,
                                                 std::size_t per_temperature, std::size_t k, Rng& rng) {
  std::vector<SampledContext> out;
  out.reserve(temperatures.size() * per_temperature);
  for (double t : temperatures) {
    for (std::size_t i = 0; i < per_temperature; ++i) out.push_back(sample_context(index, k, t, rng));
  }
  return out;
}

Json suite_to_json(std::span<const SampledContext> suite) {
  Json contexts = Json::array();
  for (const auto& s : suite) {
    Json ids = Json::array(), labels = Json::array(), uris = Json::array();
    for (const auto& img : s.context.images()) {
      ids.push_back(img.id);
      labels.push_back(img.label);
      uris.push_back(img.uri);
    }
    contexts.push_back({{"id_list", std::move(ids)},
                        {"labels", std::move(labels)},
                        {"temperature", s.temperature},
                        {"seed_image", s.seed_image},
                        {"uris", std::move(uris)}});
  }
  return Json{{"contexts", std::move(contexts)}};
}

std::vector<SampledContext> suite_from_json(const Json& j) {
  std::vector<SampledContext> out;
  try {
    for (const auto& c : j.at("contexts")) {
      auto ids = c.at("id_list").get<std::vector<std::string>>();
      auto labels = c.at("labels").get<std::vector<std::string>>();
      std::vector<std::string> uris = c.contains("uris") ? c.at("uris").get<std::vector<std::string>>() : ids;
      if (labels.size() != ids.size() || uris.size() != ids.size()) {
        throw InputError("context suite entry has mismatched id_list/labels/uris lengths");
      }
      std::vector<ImageRef> images;
      for (std::size_t i = 0; i < ids.size(); ++i) images.push_back({ids[i], labels[i], uris[i]});
      out.push_back({Context(std::move(images)), c.value("temperature", 0.0),
                     c.value("seed_image", ids.empty() ? std::string{} : ids.front())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed context suite: ") + e.what());
  }
  return out;
}

}  // namespace refgame::sampler
