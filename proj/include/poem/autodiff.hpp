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

// Define-by-run reverse-mode differentiation over dense double tensors.
//
// Every builder call on Graph appends a node and computes its value
// immediately, so a graph is always fully evaluated after construction.
// evaluate() replays the recorded program with different input/parameter
// values without touching the graph; gradient() runs one reverse sweep from a
// scalar node.
//
// Binary elementwise ops broadcast numpy-style: shapes are right-aligned and
// an axis of extent 1 stretches to match the other operand.

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "poem/tensor.hpp"

namespace poem {

enum class Op : std::uint8_t {
  kInput,
  kParameter,
  kConstant,
  kAdd,
  kSubtract,
  kMultiply,
  kDivide,
  kMatmul,
  kNegate,
  kSquare,
  kExp,
  kLog,
  kSoftplus,
  kTanh,
  kRelu,
  kSum,
  kMean,
  kLogSumExp,
  kConcat,
  kIndexSelect,
  kScale,
  kShift,
  kClamp,
  kReshape,
};

std::string_view op_name(Op op);

struct NodeId {
  std::size_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

/// Raised for shape mismatches and non-finite values; names the offending node.
class GraphError : public std::runtime_error {
 public:
  GraphError(const std::string& message, std::size_t node, Op op);
  std::size_t node() const { return node_; }
  Op op() const { return op_; }

 private:
  std::size_t node_;
  Op op_;
};

using Bindings = std::map<NodeId, Tensor>;

class Graph {
 public:
  struct Attrs {
    std::size_t axis = 0;
    bool keep_dim = false;
    double a = 0.0;
    double b = 0.0;
    std::vector<std::size_t> indices;
    Shape shape;
  };

  struct Node {
    Op op;
    std::vector<std::size_t> parents;
    Attrs attrs;
    Tensor value;
    bool needs_grad = false;
    std::string name;
  };

  NodeId input(Tensor value, std::string name = {});
  NodeId parameter(Tensor value, std::string name = {});
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId subtract(NodeId a, NodeId b);
  NodeId multiply(NodeId a, NodeId b);
  NodeId divide(NodeId a, NodeId b);
  /// [n, k] x [k, m] -> [n, m]
  NodeId matmul(NodeId a, NodeId b);

  NodeId negate(NodeId x);
  NodeId square(NodeId x);
  NodeId exp(NodeId x);
  NodeId log(NodeId x);
  NodeId softplus(NodeId x);
  NodeId tanh(NodeId x);
  NodeId relu(NodeId x);

  NodeId sum(NodeId x, std::size_t axis, bool keep_dim = false);
  NodeId mean(NodeId x, std::size_t axis, bool keep_dim = false);
  /// Max-shifted log(sum(exp(x))) along one axis.
  NodeId logsumexp(NodeId x, std::size_t axis, bool keep_dim = false);
  /// Sum of every element, producing shape [].
  NodeId sum_all(NodeId x);

  NodeId concat(std::span<const NodeId> parts, std::size_t axis);
  NodeId index_select(NodeId x, std::size_t axis, std::vector<std::size_t> indices);

  NodeId scale(NodeId x, double factor);
  NodeId shift(NodeId x, double offset);
  /// Clamp into [lo, hi]; gradient passes through inside the range, zero outside.
  NodeId clamp(NodeId x, double lo, double hi);
  NodeId reshape(NodeId x, Shape shape);

  const Tensor& value(NodeId id) const { return nodes_.at(id.index).value; }
  const Node& node(NodeId id) const { return nodes_.at(id.index); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeId>& parameters() const { return parameters_; }
  const std::vector<NodeId>& inputs() const { return inputs_; }

 private:
  NodeId append(Op op, std::vector<std::size_t> parents, Attrs attrs);
  NodeId append(Op op, std::vector<std::size_t> parents);

  std::vector<Node> nodes_;
  std::vector<NodeId> parameters_;
  std::vector<NodeId> inputs_;
};

/// Recomputes every node with `bindings` overriding input/parameter values;
/// unbound leaves keep their recorded values. Returns one tensor per node.
std::vector<Tensor> evaluate(const Graph& graph, const Bindings& bindings);

/// d(output)/d(w) for each w in `wrt`, using the values recorded in `graph`.
/// `output` must hold exactly one element with shape [] (or all-ones extents).
std::vector<Tensor> gradient(const Graph& graph, NodeId output, std::span<const NodeId> wrt);

/// Max over all coordinates of |analytic - central difference| / max(1e-8, |central difference|).
double finite_diff_check(const Graph& graph, NodeId output, std::span<const NodeId> params,
                         double eps = 1e-5);

// Broadcasting helpers, exposed for tests.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_strides;
  std::vector<std::size_t> b_strides;
};

/// Returns false when the shapes are incompatible.
bool plan_broadcast(const Shape& a, const Shape& b, BroadcastPlan& plan);

}  // namespace poem
