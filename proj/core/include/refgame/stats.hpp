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

#include <span>

namespace refgame::stats {

// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double incomplete_beta(double a, double b, double x);

// P(T <= t) for Student's t with dof degrees of freedom (dof may be fractional).
double student_t_cdf(double t, double dof);

// P(|T| >= |t|).
double student_t_two_sided_p(double t, double dof);

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;  // Welch-Satterthwaite
  double p = 1.0;    // two-sided
};

// Throws InputError when either sample has fewer than 2 values or both have
// zero variance.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace refgame::stats
