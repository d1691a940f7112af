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

#include "refgame/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "refgame/errors.hpp"
#include "refgame/rng.hpp"

namespace refgame::gmm {
namespace {

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Fills resp (n x k, row-major) with posteriors and returns the log-likelihood.
double e_step(std::span<const double> data, const GMMFit& fit, std::vector<double>& resp) {
  const std::size_t k = fit.means.size();
  std::vector<double> lp(k);
  double ll = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      lp[c] = std::log(fit.weights[c]) + log_normal(data[i], fit.means[c], fit.variances[c]);
    }
    const double lse = log_sum_exp(lp);
    ll += lse;
    for (std::size_t c = 0; c < k; ++c) resp[i * k + c] = std::exp(lp[c] - lse);
  }
  return ll;
}

void m_step(std::span<const double> data, const std::vector<double>& resp, GMMFit& fit, double floor) {
  const std::size_t k = fit.means.size();
  const double n = static_cast<double>(data.size());
  for (std::size_t c = 0; c < k; ++c) {
    double nk = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      nk += resp[i * k + c];
      sum += resp[i * k + c] * data[i];
    }
    if (nk <= std::numeric_limits<double>::min()) {
      // Component lost all mass; keep it alive at negligible weight.
      fit.weights[c] = std::numeric_limits<double>::min();
      continue;
    }
    const double mean = sum / nk;
    double ss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double d = data[i] - mean;
      ss += resp[i * k + c] * d * d;
    }
    fit.weights[c] = nk / n;
    fit.means[c] = mean;
    fit.variances[c] = std::max(ss / nk, floor);
  }
  const double total = std::accumulate(fit.weights.begin(), fit.weights.end(), 0.0);
  for (double& w : fit.weights) w /= total;
}

GMMFit initialize(std::span<const double> data, int components, std::uint64_t seed, double floor) {
  const std::size_t n = data.size();
  const std::size_t k = static_cast<std::size_t>(components);
  Rng rng(seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: first k entries become distinct random indices.
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
  std::vector<double> centers(k);
  for (std::size_t c = 0; c < k; ++c) centers[c] = data[idx[c]];

  const double mean_all = std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(n);
  double var_all = 0.0;
  for (double x : data) var_all += (x - mean_all) * (x - mean_all);
  var_all = std::max(var_all / static_cast<double>(n), floor);

  std::vector<std::vector<double>> members(k);
  for (double x : data) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (std::fabs(x - centers[c]) < std::fabs(x - centers[best])) best = c;
    }
    members[best].push_back(x);
  }
  GMMFit fit;
  fit.components = components;
  fit.seed = seed;
  for (std::size_t c = 0; c < k; ++c) {
    const auto& m = members[c];
    if (m.empty()) {
      fit.weights.push_back(1.0 / static_cast<double>(n));
      fit.means.push_back(centers[c]);
      fit.variances.push_back(var_all);
      continue;
    }
    const double mu = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
    double ss = 0.0;
    for (double x : m) ss += (x - mu) * (x - mu);
    fit.weights.push_back(static_cast<double>(m.size()) / static_cast<double>(n));
    fit.means.push_back(mu);
    fit.variances.push_back(m.size() >= 2 ? std::max(ss / static_cast<double>(m.size()), floor) : var_all);
  }
  const double total = std::accumulate(fit.weights.begin(), fit.weights.end(), 0.0);
  for (double& w : fit.weights) w /= total;
  return fit;
}

}  // namespace

std::vector<double> GMMFit::responsibilities(double x) const {
  std::vector<double> lp(means.size());
  for (std::size_t c = 0; c < means.size(); ++c) lp[c] = std::log(weights[c]) + log_normal(x, means[c], variances[c]);
  const double lse = log_sum_exp(lp);
  for (double& v : lp) v = std::exp(v - lse);
  return lp;
}

int GMMFit::most_likely_component(double x) const {
  auto r = responsibilities(x);
  return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

double bic(int components, std::size_t n, double log_likelihood) {
  return (3.0 * components - 1.0) * std::log(static_cast<double>(n)) - 2.0 * log_likelihood;
}

GMMFit fit_em(std::span<const double> data, int components, std::uint64_t seed, const EmOptions& opts) {
  if (data.empty()) throw InputError("fit_em: empty data");
  if (components < 1 || static_cast<std::size_t>(components) > data.size()) {
    throw InputError("fit_em: component count must be in [1, |data|]");
  }
  GMMFit fit = initialize(data, components, seed, opts.variance_floor);
  std::vector<double> resp(data.size() * static_cast<std::size_t>(components));
  double ll = e_step(data, fit, resp);
  fit.log_likelihood_trace.push_back(ll);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    m_step(data, resp, fit, opts.variance_floor);
    const double next = e_step(data, fit, resp);
    fit.log_likelihood_trace.push_back(next);
    fit.iterations = it;
    const bool converged = std::fabs(next - ll) < opts.tolerance;
    ll = next;
    if (converged) break;
  }
  fit.log_likelihood = ll;
  fit.bic = bic(components, data.size(), ll);
  return fit;
}

Selection fit_gmm_1d(std::span<const double> data, int k_min, int k_max, std::span<const std::uint64_t> seeds,
                     const EmOptions& opts) {
  if (data.empty()) throw InputError("fit_gmm_1d: empty data");
  if (k_min < 1 || k_max < k_min) throw InputError("fit_gmm_1d: invalid component range");
  if (data.size() <= static_cast<std::size_t>(k_max)) {
    throw InputError("fit_gmm_1d: need more data points than the largest component count");
  }
  if (seeds.empty()) throw InputError("fit_gmm_1d: no seeds");
  Selection sel;
  for (int k = k_min; k <= k_max; ++k) {
    for (std::uint64_t seed : seeds) sel.candidates.push_back(fit_em(data, k, seed, opts));
  }
  sel.best = *std::min_element(sel.candidates.begin(), sel.candidates.end(),
                               [](const GMMFit& a, const GMMFit& b) { return a.bic < b.bic; });
  return sel;
}

std::string_view to_string(Consistency c) { return c == Consistency::High ? "high" : "low"; }

std::map<std::string, Consistency> classify_speaker_consistency(const std::map<std::string, double>& mean_wnd,
                                                                const GMMFit& fit, double threshold) {
  std::map<std::string, Consistency> out;
  for (const auto& [speaker, value] : mean_wnd) {
    const int c = fit.most_likely_component(value);
    out[speaker] = fit.means[static_cast<std::size_t>(c)] < threshold ? Consistency::High : Consistency::Low;
  }
  return out;
}

}  // namespace refgame::gmm
