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

// Randomised oracle suites shared by `poem selftest` and the acceptance runner.
// Each suite compares the production code against an independent computation
// and reports the worst case it saw.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include <json.hpp>

#include "poem/gaussian.hpp"

namespace poem {

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst = 0.0;      // largest error observed
  double tolerance = 0.0;  // pass iff worst <= tolerance and failures == 0
  double seconds = 0.0;
  nlohmann::json first_failure;  // enough to replay the case; null when passing
  nlohmann::json details = nlohmann::json::object();

  bool passed() const { return failures == 0; }
};

using ProductFn = std::function<FusedRepresentation<double>(std::span<const DiagGaussian<double>>)>;

/// The production product.
ProductFn default_product();

/// Deliberately broken product for fault injection: flips the sign of the
/// spread term inside log S.
ProductFn faulty_product();

/// Analytic log S of random 1-D factor sets (k <= 5, mu in [-3, 3], tau in
/// [0.1, 10]) against trapezoid quadrature; relative error of S.
SuiteResult gaussian_product_suite(std::uint64_t seed, std::size_t instances = 200, double tolerance = 1e-6,
                                   const ProductFn& product = default_product());

/// episode_scores against brute-force quadrature of the predictive ratio on
/// random 1-D episodes (M = 3, V <= 3), both prior modes; relative error of the ratio.
SuiteResult predictive_suite(std::uint64_t seed, std::size_t episodes = 100, double tolerance = 1e-5);

/// Associativity, permutation invariance and precision additivity of the product.
SuiteResult invariant_suite(std::uint64_t seed, std::size_t instances = 1000, double tolerance = 1e-10,
                            const ProductFn& product = default_product());

/// Unit-precision scores against the closed-form probabilities on episodes with
/// unequal support sizes, and argmax agreement with ProtoNet when sizes are equal.
SuiteResult a4_suite(std::uint64_t seed, std::size_t episodes = 100, double tolerance = 1e-9);

/// finite_diff_check on the full episode loss (encoder, fusion, Gaussian-prior
/// NLL) and on the decoder loss at `points` random parameter points each.
SuiteResult gradient_suite(std::uint64_t seed, std::size_t points = 3, double tolerance = 1e-4, double eps = 1e-4);

}  // namespace poem
