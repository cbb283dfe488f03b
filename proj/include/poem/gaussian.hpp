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

// Diagonal Gaussian experts and their products.
//
// For factors N(mu_i, 1/tau_i) on one dimension the product is S * N(mu, 1/tau)
// with
//   tau   = sum_i tau_i
//   mu    = sum_i tau_i mu_i / tau
//   log S = (1 - n)/2 log(2 pi) + 1/2 sum_i log tau_i - 1/2 log tau
//           - 1/2 sum_i tau_i (mu_i - mu)^2
// The last term equals 1/2 tau mu^2 - 1/2 sum_i tau_i mu_i^2 but does not
// cancel catastrophically for large means. Everything stays in log domain.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace poem {

inline constexpr double kMinPrecision = 1e-6;
inline constexpr double kMaxPrecision = 1e6;
inline constexpr double kDefaultPriorPrecision = 1e-3;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Factor phi(z|x): independent Gaussian per embedding dimension.
template <class Scalar = double>
struct DiagGaussian {
  Vec<Scalar> mean;
  Vec<Scalar> precision;

  DiagGaussian() = default;
  DiagGaussian(Vec<Scalar> m, Vec<Scalar> p) : mean(std::move(m)), precision(std::move(p)) {
    if (mean.size() != precision.size()) throw std::invalid_argument("mean/precision size mismatch");
  }

  static DiagGaussian constant(Eigen::Index dim, Scalar m, Scalar p) {
    return DiagGaussian(Vec<Scalar>::Constant(dim, m), Vec<Scalar>::Constant(dim, p));
  }

  Eigen::Index dim() const { return mean.size(); }

  DiagGaussian clamped() const {
    return DiagGaussian(mean, precision.cwiseMax(Scalar(kMinPrecision)).cwiseMin(Scalar(kMaxPrecision)));
  }
};

enum class PriorMode { kNeglect, kGaussian };

/// p(z). Neglect treats the prior as a flat unit density; Gaussian is proper.
template <class Scalar = double>
struct PriorSpec {
  PriorMode mode = PriorMode::kNeglect;
  Vec<Scalar> mean;
  Vec<Scalar> precision;

  static PriorSpec neglect() { return {}; }

  static PriorSpec gaussian(Eigen::Index dim, Scalar mean = Scalar(0),
                            Scalar precision = Scalar(kDefaultPriorPrecision)) {
    if (!(precision > Scalar(0))) throw std::invalid_argument("prior precision must be positive");
    return {PriorMode::kGaussian, Vec<Scalar>::Constant(dim, mean), Vec<Scalar>::Constant(dim, precision)};
  }

  DiagGaussian<Scalar> factor() const { return DiagGaussian<Scalar>(mean, precision); }
};

/// Normalized product of a set of factors plus its per-dimension log normalizer.
///
/// `evidence` is the product over views only; `product` additionally includes
/// the prior when one is used (it is then the support posterior).
/// `prior_log_norm_per_dim` is log S' of prior x normalized evidence, zero
/// under a neglected prior.
template <class Scalar = double>
struct FusedRepresentation {
  DiagGaussian<Scalar> product;
  Vec<Scalar> log_norm_per_dim;
  DiagGaussian<Scalar> evidence;
  Vec<Scalar> prior_log_norm_per_dim;

  Scalar log_norm() const { return log_norm_per_dim.sum(); }
};

/// Per-(query, item) log predictive scores. Row n, column m.
template <class Scalar = double>
struct ScoreMatrix {
  Mat<Scalar> values;
  std::vector<std::size_t> targets;

  Eigen::Index queries() const { return values.rows(); }
  Eigen::Index items() const { return values.cols(); }
};

template <class Scalar>
FusedRepresentation<Scalar> gaussian_product(std::span<const DiagGaussian<Scalar>> factors) {
  if (factors.empty()) throw std::invalid_argument("gaussian_product: empty factor list");
  const Eigen::Index dim = factors.front().dim();
  for (const auto& f : factors)
    if (f.dim() != dim)
      throw std::invalid_argument("gaussian_product: dimension mismatch (" + std::to_string(f.dim()) + " vs " +
                                  std::to_string(dim) + ")");

  Vec<Scalar> tau = Vec<Scalar>::Zero(dim);
  Vec<Scalar> weighted = Vec<Scalar>::Zero(dim);
  Vec<Scalar> log_tau_sum = Vec<Scalar>::Zero(dim);
  for (const auto& f : factors) {
    tau += f.precision;
    weighted += f.precision.cwiseProduct(f.mean);
    log_tau_sum += f.precision.array().log().matrix();
  }
  Vec<Scalar> mu = weighted.cwiseQuotient(tau);

  Vec<Scalar> spread = Vec<Scalar>::Zero(dim);
  for (const auto& f : factors) spread += f.precision.cwiseProduct((f.mean - mu).cwiseAbs2());

  const Scalar n = Scalar(factors.size());
  const Scalar log_two_pi = Scalar(std::log(2.0 * std::numbers::pi));
  Vec<Scalar> log_s = (Scalar(0.5) * (Scalar(1) - n) * log_two_pi + Scalar(0.5) * log_tau_sum.array() -
                       Scalar(0.5) * tau.array().log() - Scalar(0.5) * spread.array())
                          .matrix();
  if (factors.size() == 1) log_s.setZero();

  FusedRepresentation<Scalar> out;
  out.product = DiagGaussian<Scalar>(mu, tau);
  out.log_norm_per_dim = std::move(log_s);
  out.evidence = out.product;
  out.prior_log_norm_per_dim = Vec<Scalar>::Zero(dim);
  return out;
}

template <class Scalar>
FusedRepresentation<Scalar> gaussian_product(const std::vector<DiagGaussian<Scalar>>& factors) {
  return gaussian_product(std::span<const DiagGaussian<Scalar>>(factors));
}

/// Per-dimension log normalizer of the product of exactly two factors.
template <class Scalar>
Vec<Scalar> pair_log_norm(const DiagGaussian<Scalar>& a, const DiagGaussian<Scalar>& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("pair_log_norm: dimension mismatch");
  const auto ta = a.precision.array();
  const auto tb = b.precision.array();
  const auto tsum = ta + tb;
  const Scalar half_log_two_pi = Scalar(0.5 * std::log(2.0 * std::numbers::pi));
  return (-half_log_two_pi + Scalar(0.5) * (ta.log() + tb.log() - tsum.log()) -
          Scalar(0.5) * (ta * tb / tsum) * (a.mean - b.mean).array().square())
      .matrix();
}

template <class Scalar>
FusedRepresentation<Scalar> fuse_support(std::span<const DiagGaussian<Scalar>> views,
                                         const PriorSpec<Scalar>& prior) {
  FusedRepresentation<Scalar> evidence = gaussian_product(views);
  if (prior.mode == PriorMode::kNeglect) return evidence;

  if (prior.mean.size() != evidence.product.dim() || prior.precision.size() != evidence.product.dim())
    throw std::invalid_argument("fuse_support: prior dimension mismatch");
  if ((prior.precision.array() <= Scalar(0)).any())
    throw std::invalid_argument("fuse_support: prior precision must be positive");

  const DiagGaussian<Scalar> prior_factor = prior.factor();
  std::vector<DiagGaussian<Scalar>> with_prior(views.begin(), views.end());
  with_prior.push_back(prior_factor);
  FusedRepresentation<Scalar> posterior = gaussian_product(std::span<const DiagGaussian<Scalar>>(with_prior));
  posterior.evidence = evidence.product;
  posterior.prior_log_norm_per_dim = pair_log_norm(prior_factor, evidence.product);
  return posterior;
}

template <class Scalar>
FusedRepresentation<Scalar> fuse_support(const std::vector<DiagGaussian<Scalar>>& views,
                                         const PriorSpec<Scalar>& prior) {
  return fuse_support(std::span<const DiagGaussian<Scalar>>(views), prior);
}

/// log(lambda / lambda') = sum over dims of log S* - log S'.
template <class Scalar>
Scalar query_log_score(const DiagGaussian<Scalar>& query, const FusedRepresentation<Scalar>& support,
                       const PriorSpec<Scalar>& prior) {
  if (query.dim() != support.evidence.dim()) throw std::invalid_argument("query_log_score: dimension mismatch");
  Scalar score = pair_log_norm(query, support.evidence).sum();
  if (prior.mode == PriorMode::kGaussian) score -= support.prior_log_norm_per_dim.sum();
  return score;
}

template <class Scalar>
ScoreMatrix<Scalar> episode_scores(const std::vector<std::vector<DiagGaussian<Scalar>>>& support_sets,
                                   const std::vector<DiagGaussian<Scalar>>& queries, const PriorSpec<Scalar>& prior,
                                   std::vector<std::size_t> targets = {}) {
  if (support_sets.empty()) throw std::invalid_argument("episode_scores: no support items");
  if (queries.empty()) throw std::invalid_argument("episode_scores: no queries");
  std::vector<FusedRepresentation<Scalar>> fused;
  fused.reserve(support_sets.size());
  for (const auto& set : support_sets) fused.push_back(fuse_support(set, prior));

  ScoreMatrix<Scalar> out;
  out.values.resize(static_cast<Eigen::Index>(queries.size()), static_cast<Eigen::Index>(support_sets.size()));
  for (std::size_t n = 0; n < queries.size(); ++n)
    for (std::size_t m = 0; m < fused.size(); ++m)
      out.values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) =
          query_log_score(queries[n], fused[m], prior);
  out.targets = std::move(targets);
  for (auto t : out.targets)
    if (t >= support_sets.size()) throw std::invalid_argument("episode_scores: target out of range");
  return out;
}

/// Mean over queries of -log softmax(row)[target], max-shifted.
template <class Scalar>
Scalar poem_nll(const ScoreMatrix<Scalar>& scores) {
  if (static_cast<Eigen::Index>(scores.targets.size()) != scores.queries())
    throw std::invalid_argument("poem_nll: one target per query required");
  Scalar total = Scalar(0);
  for (Eigen::Index n = 0; n < scores.queries(); ++n) {
    const auto row = scores.values.row(n);
    const Scalar mx = row.maxCoeff();
    const Scalar lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(static_cast<Eigen::Index>(scores.targets[static_cast<std::size_t>(n)]));
  }
  return total / Scalar(scores.queries());
}

/// Index of the best-scoring item per query; first index wins ties.
template <class Scalar>
std::vector<std::size_t> predictions(const ScoreMatrix<Scalar>& scores) {
  std::vector<std::size_t> out(static_cast<std::size_t>(scores.queries()));
  for (Eigen::Index n = 0; n < scores.queries(); ++n) {
    Eigen::Index best = 0;
    scores.values.row(n).maxCoeff(&best);
    out[static_cast<std::size_t>(n)] = static_cast<std::size_t>(best);
  }
  return out;
}

template <class Scalar>
double accuracy(const ScoreMatrix<Scalar>& scores) {
  const auto pred = predictions(scores);
  std::size_t hits = 0;
  for (std::size_t n = 0; n < pred.size(); ++n) hits += pred[n] == scores.targets.at(n) ? 1 : 0;
  return pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace poem
