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

#include "poem/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace poem {
namespace {

double log_density(const Factor1D& f, double z) {
  const double d = z - f.mean;
  return 0.5 * std::log(f.precision / (2.0 * std::numbers::pi)) - 0.5 * f.precision * d * d;
}

// Trapezoid sums with step h and 2h over the same grid, both returned in log
// domain after a common max shift.
struct TrapezoidPair {
  double log_fine = 0.0;
  double log_coarse = 0.0;
};

TrapezoidPair trapezoid_pair(const std::vector<Factor1D>& factors, double lo, double hi, std::size_t points) {
  if (points < 3) throw QuadratureError("quadrature needs at least 3 points");
  if (points % 2 == 0) ++points;  // coarse grid reuses every other node
  const double h = (hi - lo) / static_cast<double>(points - 1);
  std::vector<double> log_f(points);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points; ++i) {
    const double z = lo + h * static_cast<double>(i);
    double acc = 0.0;
    for (const auto& f : factors) acc += log_density(f, z);
    log_f[i] = acc;
    mx = std::max(mx, acc);
  }
  double fine = 0.0;
  double coarse = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double w = (i == 0 || i + 1 == points) ? 0.5 : 1.0;
    const double v = std::exp(log_f[i] - mx);
    fine += w * v;
    if (i % 2 == 0) coarse += w * v;
  }
  return {mx + std::log(fine * h), mx + std::log(coarse * 2.0 * h)};
}

}  // namespace

double log_integral_trapezoid(const std::vector<Factor1D>& factors, double lo, double hi, std::size_t points) {
  if (factors.empty()) throw QuadratureError("no factors to integrate");
  return trapezoid_pair(factors, lo, hi, points).log_fine;
}

double log_integral_trapezoid(const std::vector<Factor1D>& factors, const QuadratureSpec& spec) {
  if (factors.empty()) throw QuadratureError("no factors to integrate");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double narrowest = std::numeric_limits<double>::infinity();
  for (const auto& f : factors) {
    if (!(f.precision > 0.0)) throw QuadratureError("factor precision must be positive");
    const double sigma = 1.0 / std::sqrt(f.precision);
    lo = std::min(lo, f.mean - spec.sigmas * sigma);
    hi = std::max(hi, f.mean + spec.sigmas * sigma);
    narrowest = std::min(narrowest, sigma);
  }
  const auto needed = static_cast<std::size_t>(std::ceil((hi - lo) / (spec.max_step_in_sigmas * narrowest))) + 1;
  const std::size_t points = std::max(spec.min_points, needed);
  const auto pair = trapezoid_pair(factors, lo, hi, points);
  // Richardson estimate of the fine-grid error, relative to the integral.
  const double rel_err = std::abs(std::expm1(pair.log_coarse - pair.log_fine)) / 3.0;
  if (!(rel_err <= spec.max_error))
    throw QuadratureError("quadrature grid too coarse: estimated relative error " + std::to_string(rel_err));
  return pair.log_fine;
}

ScoreMatrix<double> brute_force_predictive(const std::vector<std::vector<Factor1D>>& support_sets,
                                           const std::vector<Factor1D>& queries, const PriorSpec<double>& prior,
                                           const QuadratureSpec& spec) {
  if (support_sets.empty() || queries.empty()) throw QuadratureError("empty episode");
  const bool gaussian = prior.mode == PriorMode::kGaussian;
  if (gaussian && (prior.mean.size() != 1 || prior.precision.size() != 1))
    throw QuadratureError("brute_force_predictive handles one dimension only");

  ScoreMatrix<double> out;
  out.values.resize(static_cast<Eigen::Index>(queries.size()), static_cast<Eigen::Index>(support_sets.size()));
  for (std::size_t m = 0; m < support_sets.size(); ++m) {
    std::vector<Factor1D> denominator = support_sets[m];
    if (gaussian) denominator.push_back({prior.mean(0), prior.precision(0)});
    const double log_lambda_prime = log_integral_trapezoid(denominator, spec);
    for (std::size_t n = 0; n < queries.size(); ++n) {
      std::vector<Factor1D> numerator = support_sets[m];
      numerator.push_back(queries[n]);
      out.values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) =
          log_integral_trapezoid(numerator, spec) - log_lambda_prime;
    }
  }
  return out;
}

}  // namespace poem
