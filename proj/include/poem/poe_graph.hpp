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

// Graph form of support fusion, episode scoring and the episode NLL, so the
// objective can be differentiated end to end. Mirrors gaussian.hpp; tests hold
// the two in agreement.

#pragma once

#include <cstddef>
#include <vector>

#include "poem/autodiff.hpp"
#include "poem/gaussian.hpp"

namespace poem {

/// Row-stacked diagonal Gaussians: mean and precision nodes of shape [rows, D].
struct GaussianNodes {
  NodeId mean;
  NodeId precision;
};

/// [items, rows] 0/1 matrix assigning each support row to its item.
Tensor assignment_matrix(const std::vector<std::size_t>& views_per_item);

/// Views-only product per item: precision = A tau, mean = A (tau * mu) / (A tau).
GaussianNodes fuse_support_nodes(Graph& g, const GaussianNodes& support,
                                 const std::vector<std::size_t>& views_per_item);

/// [N, M] log scores: sum over D of log S*(query n, item m) minus log S'(prior, item m)
/// when the prior is Gaussian.
NodeId poem_score_nodes(Graph& g, const GaussianNodes& items, const GaussianNodes& queries,
                        const PriorSpec<double>& prior);

/// [N, M] closed-form scores of unit-precision POEM: D/2 log(V/(V+1)) - V/(2(V+1)) |q - proto|^2.
NodeId a4_score_nodes(Graph& g, NodeId support_means, NodeId query_means,
                      const std::vector<std::size_t>& views_per_item);

/// [N, M] ProtoNet scores -|q - proto|^2.
NodeId proto_score_nodes(Graph& g, NodeId support_means, NodeId query_means,
                         const std::vector<std::size_t>& views_per_item);

/// Scalar mean over queries of logsumexp(row) - row[target].
NodeId nll_node(Graph& g, NodeId scores, const std::vector<std::size_t>& targets);

}  // namespace poem
