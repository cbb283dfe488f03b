// Copyright 2026 The POEM Authors
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

// Numerical-integration oracle for one-dimensional Gaussian products.
// Shares no code with gaussian.hpp beyond the value types.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "poem/gaussian.hpp"

namespace poem {

struct Factor1D {
  double mean = 0.0;
  double precision = 1.0;
};

struct QuadratureSpec {
  std::size_t min_points = 20001;
  double sigmas = 10.0;  // half-width of the grid around every factor
  /// Grid spacing never exceeds this fraction of the narrowest factor's sigma.
  double max_step_in_sigmas = 0.25;
  double max_error = 1e-8;  // relative trapezoid error estimate (h vs 2h)
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// log of the trapezoid integral of prod_i N(z; mean_i, 1/precision_i) over a
/// grid that spans `spec.sigmas` standard deviations around every factor.
/// An empty factor list is not allowed.
double log_integral_trapezoid(const std::vector<Factor1D>& factors, const QuadratureSpec& spec = {});

/// Same integrand, explicit bounds and point count; no error estimate.
double log_integral_trapezoid(const std::vector<Factor1D>& factors, double lo, double hi, std::size_t points);

/// log(lambda / lambda') for every (query, item) pair by direct quadrature:
///   lambda  = integral of phi(z|query) prod_v phi(z|x_v)
///   lambda' = integral of p(z) prod_v phi(z|x_v), with p(z) = 1 when neglected.
ScoreMatrix<double> brute_force_predictive(const std::vector<std::vector<Factor1D>>& support_sets,
                                           const std::vector<Factor1D>& queries, const PriorSpec<double>& prior,
                                           const QuadratureSpec& spec = {});

}  // namespace poem
