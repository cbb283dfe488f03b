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


#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "poem/gaussian.hpp"
#include "poem/quadrature.hpp"
#include "poem/rng.hpp"

using namespace poem;

TEST_CASE("integral of a squared standard normal is 1 / (2 sqrt(pi))") {
  const double log_i = log_integral_trapezoid({{0.0, 1.0}, {0.0, 1.0}});
  CHECK(std::exp(log_i) == doctest::Approx(0.28209479177387814).epsilon(1e-10));
}

TEST_CASE("a single density integrates to one") {
  CHECK(log_integral_trapezoid({{3.0, 0.01}}) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(log_integral_trapezoid({{-2.0, 1e4}}) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("quadrature agrees with the closed-form product") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = rng.index(1, 5);
    std::vector<Factor1D> fs;
    std::vector<DiagGaussian<double>> gs;
    for (std::size_t i = 0; i < k; ++i) {
      const double m = rng.uniform(-3.0, 3.0), p = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
      fs.push_back({m, p});
      gs.push_back(DiagGaussian<double>::constant(1, m, p));
    }
    const double q = log_integral_trapezoid(fs);
    CHECK(std::abs(std::expm1(gaussian_product(gs).log_norm() - q)) < 1e-6);
  }
}

TEST_CASE("coarse explicit grids are visibly wrong") {
  // Five points over +-10 sigma cannot resolve a unit Gaussian.
  const double coarse = log_integral_trapezoid({{0.0, 1.0}}, -10.0, 10.0, 5);
  CHECK(std::abs(coarse) > 1e-3);
  QuadratureSpec tight;
  tight.min_points = 5;
  tight.max_step_in_sigmas = 5.0;
  CHECK_THROWS_AS(log_integral_trapezoid({{0.0, 1.0}}, tight), QuadratureError);
}

TEST_CASE("bad inputs are rejected") {
  CHECK_THROWS_AS(log_integral_trapezoid({}), QuadratureError);
  CHECK_THROWS_AS(log_integral_trapezoid({{0.0, -1.0}}), QuadratureError);
  CHECK_THROWS_AS(log_integral_trapezoid({{0.0, 1.0}}, -1.0, 1.0, 2), QuadratureError);
}

TEST_CASE("brute-force predictive ratio matches episode scores in both prior modes") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<Factor1D>> fsets(3);
    std::vector<std::vector<DiagGaussian<double>>> gsets(3);
    for (std::size_t m = 0; m < 3; ++m) {
      const std::size_t v = rng.index(1, 3);
      for (std::size_t i = 0; i < v; ++i) {
        const double mu = rng.uniform(-2.0, 2.0), tau = rng.uniform(0.5, 4.0);
        fsets[m].push_back({mu, tau});
        gsets[m].push_back(DiagGaussian<double>::constant(1, mu, tau));
      }
    }
    const std::vector<Factor1D> fq{{rng.uniform(-2.0, 2.0), 1.5}};
    const std::vector<DiagGaussian<double>> gq{DiagGaussian<double>::constant(1, fq[0].mean, 1.5)};
    for (const auto& prior :
         {PriorSpec<double>::neglect(), PriorSpec<double>::gaussian(1, rng.uniform(-1.0, 1.0), 0.3)}) {
      const auto brute = brute_force_predictive(fsets, fq, prior);
      const auto exact = episode_scores(gsets, gq, prior);
      for (Eigen::Index m = 0; m < 3; ++m)
        CHECK(std::abs(std::expm1(exact.values(0, m) - brute.values(0, m))) < 1e-5);
    }
  }
}
