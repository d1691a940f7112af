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

// One-dimensional Gaussian mixtures fit by EM, selected by BIC, and the
// speaker-consistency grouping built on top of them.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace refgame::gmm {

inline constexpr double kVarianceFloor = 1e-6;

struct GMMFit {
  int components = 0;
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  double log_likelihood = 0.0;
  double bic = 0.0;
  int iterations = 0;
  std::uint64_t seed = 0;
  std::vector<double> log_likelihood_trace;  // one entry per EM iteration

  // Posterior component probabilities for x.
  std::vector<double> responsibilities(double x) const;
  int most_likely_component(double x) const;
};

struct EmOptions {
  double tolerance = 1e-8;
  int max_iterations = 500;
  double variance_floor = kVarianceFloor;
};

// (3k - 1) ln n - 2 ln L.
double bic(int components, std::size_t n, double log_likelihood);

// EM from a k-means-style start: k distinct-position data points drawn with
// the seed become the initial centers, points are assigned to the nearest.
GMMFit fit_em(std::span<const double> data, int components, std::uint64_t seed, const EmOptions& opts = {});

struct Selection {
  GMMFit best;
  std::vector<GMMFit> candidates;  // every (k, seed) fit, in search order
};

// Lowest BIC across k in [k_min, k_max] and the given seeds. Throws
// InputError on empty data, an invalid range, or |data| <= k_max.
Selection fit_gmm_1d(std::span<const double> data, int k_min, int k_max, std::span<const std::uint64_t> seeds,
                     const EmOptions& opts = {});

enum class Consistency { High, Low };

std::string_view to_string(Consistency c);

// Each speaker goes to its maximum-responsibility component; components whose
// mean is below the threshold are the high-consistency group.
std::map<std::string, Consistency> classify_speaker_consistency(const std::map<std::string, double>& mean_wnd,
                                                                const GMMFit& fit, double threshold = 2.0);

}  // namespace refgame::gmm
