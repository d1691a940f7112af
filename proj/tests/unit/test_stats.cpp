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

#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <boost/math/special_functions/beta.hpp>

#include "oracles.hpp"
#include "refgame/errors.hpp"
#include "refgame/stats.hpp"

namespace refgame {
namespace {

TEST(IncompleteBeta, AgreesWithBoost) {
  for (double a : {0.5, 1.0, 2.5, 10.0, 40.0}) {
    for (double b : {0.5, 1.0, 3.0, 25.0}) {
      for (double x : {0.0, 1e-6, 0.1, 0.5, 0.9, 0.999, 1.0}) {
        EXPECT_NEAR(stats::incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-12) << a << " " << b << " " << x;
      }
    }
  }
}

TEST(StudentT, CdfSymmetricAndAccurate) {
  for (double dof : {1.0, 2.5, 5.88, 30.0, 400.0}) {
    boost::math::students_t_distribution<double> dist(dof);
    for (double t : {-8.0, -1.897, -0.1, 0.0, 0.7, 3.0}) {
      EXPECT_NEAR(stats::student_t_cdf(t, dof), boost::math::cdf(dist, t), 1e-10);
      EXPECT_NEAR(stats::student_t_cdf(t, dof) + stats::student_t_cdf(-t, dof), 1.0, 1e-12);
    }
  }
}

TEST(Welch, IdenticalSamples) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const auto r = stats::welch_t_test(a, a);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(Welch, HandExample) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 6, 8, 10};
  const auto r = stats::welch_t_test(a, b);
  EXPECT_NEAR(r.t, -1.897, 5e-4);
  EXPECT_NEAR(r.dof, 5.88, 5e-3);
  const auto o = oracle::welch(a, b);
  EXPECT_NEAR(r.t, o.t, 1e-12);
  EXPECT_NEAR(r.dof, o.dof, 1e-10);
  EXPECT_NEAR(r.p, o.p, 1e-10);
}

TEST(Welch, SwapFlipsSignExactly) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(2 + gen() % 20), b(2 + gen() % 20);
    for (auto& v : a) v = nd(gen);
    for (auto& v : b) v = 0.5 + 2 * nd(gen);
    const auto ab = stats::welch_t_test(a, b), ba = stats::welch_t_test(b, a);
    ASSERT_EQ(ab.t, -ba.t);
    ASSERT_EQ(ab.p, ba.p);
    ASSERT_EQ(ab.dof, ba.dof);
    ASSERT_GT(ab.p, 0.0);
    ASSERT_LE(ab.p, 1.0);
  }
}

TEST(Welch, DegenerateInputsRejected) {
  const std::vector<double> one{1.0}, flat{2, 2, 2}, flat2{3, 3};
  const std::vector<double> ok{1, 2, 3};
  EXPECT_THROW(stats::welch_t_test(one, ok), InputError);
  EXPECT_THROW(stats::welch_t_test(flat, flat2), InputError);
  EXPECT_NO_THROW(stats::welch_t_test(flat, ok));
}

}  // namespace
}  // namespace refgame
