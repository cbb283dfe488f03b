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

#include "poem/poe_graph.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace poem {
namespace {

const double kHalfLogTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);

std::size_t total_views(const std::vector<std::size_t>& views_per_item) {
  return std::accumulate(views_per_item.begin(), views_per_item.end(), std::size_t{0});
}

// Per-dimension log normalizer of a x b where a is [N, 1, D] and b is [1, M, D].
NodeId pair_log_norm_nodes(Graph& g, const GaussianNodes& a, const GaussianNodes& b) {
  const NodeId tsum = g.add(a.precision, b.precision);
  const NodeId logs = g.subtract(g.add(g.log(a.precision), g.log(b.precision)), g.log(tsum));
  const NodeId gap = g.square(g.subtract(a.mean, b.mean));
  const NodeId weight = g.divide(g.multiply(a.precision, b.precision), tsum);
  const NodeId per_dim = g.subtract(g.scale(logs, 0.5), g.scale(g.multiply(weight, gap), 0.5));
  return g.shift(per_dim, -kHalfLogTwoPi);
}

NodeId prototypes(Graph& g, NodeId support_means, const std::vector<std::size_t>& views_per_item) {
  Tensor avg = assignment_matrix(views_per_item);
  for (std::size_t m = 0; m < views_per_item.size(); ++m)
    for (std::size_t s = 0; s < avg.extent(1); ++s) avg.at(m, s) /= static_cast<double>(views_per_item[m]);
  return g.matmul(g.constant(std::move(avg)), support_means);
}

// [N, M] squared distances between query means and item prototypes.
NodeId squared_distances(Graph& g, NodeId protos, NodeId query_means) {
  const std::size_t n = g.value(query_means).extent(0);
  const std::size_t d = g.value(query_means).extent(1);
  const std::size_t m = g.value(protos).extent(0);
  const NodeId q = g.reshape(query_means, Shape{n, 1, d});
  const NodeId p = g.reshape(protos, Shape{1, m, d});
  return g.sum(g.square(g.subtract(q, p)), 2);
}

}  // namespace

Tensor assignment_matrix(const std::vector<std::size_t>& views_per_item) {
  if (views_per_item.empty()) throw std::invalid_argument("assignment_matrix: no items");
  const std::size_t rows = total_views(views_per_item);
  Tensor a(Shape{views_per_item.size(), rows}, 0.0);
  std::size_t offset = 0;
  for (std::size_t m = 0; m < views_per_item.size(); ++m) {
    if (views_per_item[m] == 0) throw std::invalid_argument("assignment_matrix: item without views");
    for (std::size_t v = 0; v < views_per_item[m]; ++v) a.at(m, offset + v) = 1.0;
    offset += views_per_item[m];
  }
  return a;
}

GaussianNodes fuse_support_nodes(Graph& g, const GaussianNodes& support,
                                 const std::vector<std::size_t>& views_per_item) {
  if (g.value(support.mean).extent(0) != total_views(views_per_item))
    throw std::invalid_argument("fuse_support_nodes: support rows do not match views_per_item");
  const NodeId assign = g.constant(assignment_matrix(views_per_item));
  const NodeId tau = g.matmul(assign, support.precision);
  const NodeId weighted = g.matmul(assign, g.multiply(support.precision, support.mean));
  return {g.divide(weighted, tau), tau};
}

NodeId poem_score_nodes(Graph& g, const GaussianNodes& items, const GaussianNodes& queries,
                        const PriorSpec<double>& prior) {
  const std::size_t m = g.value(items.mean).extent(0);
  const std::size_t d = g.value(items.mean).extent(1);
  const std::size_t n = g.value(queries.mean).extent(0);
  if (g.value(queries.mean).extent(1) != d) throw std::invalid_argument("poem_score_nodes: dimension mismatch");

  const GaussianNodes q{g.reshape(queries.mean, Shape{n, 1, d}), g.reshape(queries.precision, Shape{n, 1, d})};
  const GaussianNodes s{g.reshape(items.mean, Shape{1, m, d}), g.reshape(items.precision, Shape{1, m, d})};
  NodeId scores = g.sum(pair_log_norm_nodes(g, q, s), 2);

  if (prior.mode == PriorMode::kGaussian) {
    if (static_cast<std::size_t>(prior.mean.size()) != d || static_cast<std::size_t>(prior.precision.size()) != d)
      throw std::invalid_argument("poem_score_nodes: prior dimension mismatch");
    Tensor pm(Shape{1, 1, d});
    Tensor pp(Shape{1, 1, d});
    for (std::size_t k = 0; k < d; ++k) {
      pm[k] = prior.mean(static_cast<Eigen::Index>(k));
      pp[k] = prior.precision(static_cast<Eigen::Index>(k));
    }
    const GaussianNodes p{g.constant(std::move(pm)), g.constant(std::move(pp))};
    const NodeId prior_norm = g.sum(pair_log_norm_nodes(g, p, s), 2);  // [1, M]
    scores = g.subtract(scores, prior_norm);
  }
  return scores;
}

NodeId a4_score_nodes(Graph& g, NodeId support_means, NodeId query_means,
                      const std::vector<std::size_t>& views_per_item) {
  const std::size_t m = views_per_item.size();
  const double d = static_cast<double>(g.value(query_means).extent(1));
  const NodeId dist = squared_distances(g, prototypes(g, support_means, views_per_item), query_means);
  Tensor coef(Shape{1, m});
  Tensor bias(Shape{1, m});
  for (std::size_t k = 0; k < m; ++k) {
    const double v = static_cast<double>(views_per_item[k]);
    coef[k] = v / (2.0 * (v + 1.0));
    bias[k] = 0.5 * d * std::log(v / (v + 1.0));
  }
  return g.subtract(g.constant(std::move(bias)), g.multiply(g.constant(std::move(coef)), dist));
}

NodeId proto_score_nodes(Graph& g, NodeId support_means, NodeId query_means,
                         const std::vector<std::size_t>& views_per_item) {
  return g.negate(squared_distances(g, prototypes(g, support_means, views_per_item), query_means));
}

NodeId nll_node(Graph& g, NodeId scores, const std::vector<std::size_t>& targets) {
  const std::size_t n = g.value(scores).extent(0);
  const std::size_t m = g.value(scores).extent(1);
  if (targets.size() != n) throw std::invalid_argument("nll_node: one target per query required");
  Tensor onehot(Shape{n, m}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= m) throw std::invalid_argument("nll_node: target out of range");
    onehot.at(i, targets[i]) = 1.0;
  }
  const NodeId picked = g.sum(g.multiply(scores, g.constant(std::move(onehot))), 1);
  return g.mean(g.subtract(g.logsumexp(scores, 1), picked), 0);
}

}  // namespace poem
