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

#include "poem/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace poem {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParameter: return "parameter";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSubtract: return "subtract";
    case Op::kMultiply: return "multiply";
    case Op::kDivide: return "divide";
    case Op::kMatmul: return "matmul";
    case Op::kNegate: return "negate";
    case Op::kSquare: return "square";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSoftplus: return "softplus";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kLogSumExp: return "logsumexp";
    case Op::kConcat: return "concat";
    case Op::kIndexSelect: return "index_select";
    case Op::kScale: return "scale";
    case Op::kShift: return "shift";
    case Op::kClamp: return "clamp";
    case Op::kReshape: return "reshape";
  }
  return "unknown";
}

GraphError::GraphError(const std::string& message, std::size_t node, Op op)
    : std::runtime_error("node " + std::to_string(node) + " (" + std::string(op_name(op)) + "): " + message),
      node_(node),
      op_(op) {}

bool plan_broadcast(const Shape& a, const Shape& b, BroadcastPlan& plan) {
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  plan.a_strides.assign(rank, 0);
  plan.b_strides.assign(rank, 0);
  std::size_t sa = 1;
  std::size_t sb = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t d = rank - 1 - k;
    const std::size_t ea = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t eb = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (ea != eb && ea != 1 && eb != 1) return false;
    plan.out[d] = std::max(ea, eb);
    plan.a_strides[d] = ea == 1 ? 0 : sa;
    plan.b_strides[d] = eb == 1 ? 0 : sb;
    sa *= ea;
    sb *= eb;
  }
  return true;
}

namespace {

// Calls f(out_index, a_index, b_index) for every output element in row-major order.
template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t rank = p.out.size();
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t inner = p.out[rank - 1];
  const std::size_t sa = p.a_strides[rank - 1];
  const std::size_t sb = p.b_strides[rank - 1];
  const std::size_t outer = shape_size(p.out) / inner;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ai = 0;
  std::size_t bi = 0;
  std::size_t oi = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < inner; ++k) f(oi + k, ai + k * sa, bi + k * sb);
    oi += inner;
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      ai += p.a_strides[d];
      bi += p.b_strides[d];
      if (idx[d] < p.out[d]) break;
      ai -= p.a_strides[d] * p.out[d];
      bi -= p.b_strides[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.extent = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keep_dim) {
  Shape out = shape;
  if (keep_dim)
    out[axis] = 1;
  else
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

double softplus_value(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <class F>
Tensor map_unary(const Tensor& x, F&& f) {
  Tensor out(x.shape());
  const double* src = x.raw();
  double* dst = out.raw();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, const BroadcastPlan& plan, F&& f) {
  Tensor out(plan.out);
  double* dst = out.raw();
  const double* pa = a.raw();
  const double* pb = b.raw();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < a.size(); ++i) dst[i] = f(pa[i], pb[i]);
  } else {
    for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { dst[o] = f(pa[i], pb[j]); });
  }
  return out;
}

[[noreturn]] void fail(const std::string& message, std::size_t node, Op op) { throw GraphError(message, node, op); }

Tensor forward(const Graph::Node& n, const std::vector<const Tensor*>& in, std::size_t index) {
  const Op op = n.op;
  const auto& at = n.attrs;
  auto binary_plan = [&]() {
    BroadcastPlan plan;
    if (!plan_broadcast(in[0]->shape(), in[1]->shape(), plan))
      fail("cannot broadcast " + shape_string(in[0]->shape()) + " with " + shape_string(in[1]->shape()), index, op);
    return plan;
  };
  auto check_axis = [&](const Tensor& x) {
    if (at.axis >= x.rank())
      fail("axis " + std::to_string(at.axis) + " out of range for " + shape_string(x.shape()), index, op);
  };

  switch (op) {
    case Op::kInput:
    case Op::kParameter:
    case Op::kConstant:
      return n.value;
    case Op::kAdd:
      return map_binary(*in[0], *in[1], binary_plan(), [](double a, double b) { return a + b; });
    case Op::kSubtract:
      return map_binary(*in[0], *in[1], binary_plan(), [](double a, double b) { return a - b; });
    case Op::kMultiply:
      return map_binary(*in[0], *in[1], binary_plan(), [](double a, double b) { return a * b; });
    case Op::kDivide:
      return map_binary(*in[0], *in[1], binary_plan(), [](double a, double b) { return a / b; });
    case Op::kMatmul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
        fail("matmul of " + shape_string(a.shape()) + " and " + shape_string(b.shape()), index, op);
      Tensor out(Shape{a.extent(0), b.extent(1)});
      out.matrix().noalias() = a.matrix() * b.matrix();
      return out;
    }
    case Op::kNegate: return map_unary(*in[0], [](double x) { return -x; });
    case Op::kSquare: return map_unary(*in[0], [](double x) { return x * x; });
    case Op::kExp: return map_unary(*in[0], [](double x) { return std::exp(x); });
    case Op::kLog: return map_unary(*in[0], [](double x) { return std::log(x); });
    case Op::kSoftplus: return map_unary(*in[0], softplus_value);
    case Op::kTanh: return map_unary(*in[0], [](double x) { return std::tanh(x); });
    case Op::kRelu: return map_unary(*in[0], [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::kScale: return map_unary(*in[0], [f = at.a](double x) { return f * x; });
    case Op::kShift: return map_unary(*in[0], [c = at.a](double x) { return x + c; });
    case Op::kClamp:
      return map_unary(*in[0], [lo = at.a, hi = at.b](double x) { return std::clamp(x, lo, hi); });
    case Op::kReshape:
      if (shape_size(at.shape) != in[0]->size())
        fail("cannot reshape " + shape_string(in[0]->shape()) + " to " + shape_string(at.shape), index, op);
      return in[0]->reshaped(at.shape);
    case Op::kSum:
    case Op::kMean: {
      const Tensor& x = *in[0];
      check_axis(x);
      const auto s = split_axis(x.shape(), at.axis);
      Tensor out(reduced_shape(x.shape(), at.axis, at.keep_dim), 0.0);
      const double* src = x.raw();
      double* dst = out.raw();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.extent; ++k) {
          const double* row = src + (o * s.extent + k) * s.inner;
          double* acc = dst + o * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) acc[i] += row[i];
        }
      if (op == Op::kMean)
        for (auto& v : out.data()) v /= static_cast<double>(s.extent);
      return out;
    }
    case Op::kLogSumExp: {
      const Tensor& x = *in[0];
      check_axis(x);
      const auto s = split_axis(x.shape(), at.axis);
      Tensor out(reduced_shape(x.shape(), at.axis, at.keep_dim));
      const double* src = x.raw();
      double* dst = out.raw();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, src[(o * s.extent + k) * s.inner + i]);
          double acc = 0.0;
          for (std::size_t k = 0; k < s.extent; ++k) acc += std::exp(src[(o * s.extent + k) * s.inner + i] - mx);
          dst[o * s.inner + i] = mx + std::log(acc);
        }
      return out;
    }
    case Op::kConcat: {
      const Shape& first = in[0]->shape();
      if (at.axis >= first.size()) fail("concat axis out of range", index, op);
      Shape out_shape = first;
      out_shape[at.axis] = 0;
      for (const Tensor* t : in) {
        Shape a = t->shape();
        Shape b = first;
        if (a.size() != b.size()) fail("concat rank mismatch", index, op);
        out_shape[at.axis] += a[at.axis];
        a[at.axis] = b[at.axis] = 0;
        if (a != b) fail("concat shape mismatch " + shape_string(t->shape()) + " vs " + shape_string(first), index, op);
      }
      Tensor out(out_shape);
      const auto so = split_axis(out_shape, at.axis);
      std::size_t offset = 0;
      for (const Tensor* t : in) {
        const auto st = split_axis(t->shape(), at.axis);
        const std::size_t chunk = st.extent * st.inner;
        for (std::size_t o = 0; o < so.outer; ++o)
          std::copy_n(t->raw() + o * chunk, chunk, out.raw() + o * so.extent * so.inner + offset * so.inner);
        offset += st.extent;
      }
      return out;
    }
    case Op::kIndexSelect: {
      const Tensor& x = *in[0];
      check_axis(x);
      const auto s = split_axis(x.shape(), at.axis);
      Shape out_shape = x.shape();
      out_shape[at.axis] = at.indices.size();
      if (at.indices.empty()) fail("empty index list", index, op);
      Tensor out(out_shape);
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < at.indices.size(); ++k) {
          const std::size_t src_k = at.indices[k];
          if (src_k >= s.extent) fail("index " + std::to_string(src_k) + " out of range", index, op);
          std::copy_n(x.raw() + (o * s.extent + src_k) * s.inner, s.inner,
                      out.raw() + (o * at.indices.size() + k) * s.inner);
        }
      return out;
    }
  }
  fail("unknown op", index, op);
}

Tensor compute_checked(const Graph::Node& n, const std::vector<const Tensor*>& in, std::size_t index) {
  Tensor out = forward(n, in, index);
  if (!out.all_finite()) fail("non-finite output", index, n.op);
  return out;
}

// Sums `g` (broadcast output shape) back down to `target` shape.
Tensor reduce_to(const Tensor& g, const Shape& target, const BroadcastPlan& plan, bool first) {
  if (g.shape() == target) return g;
  Tensor out(target, 0.0);
  double* dst = out.raw();
  const double* src = g.raw();
  if (first)
    for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { dst[i] += src[o]; });
  else
    for_each_broadcast(plan, [&](std::size_t o, std::size_t, std::size_t j) { dst[j] += src[o]; });
  return out;
}

}  // namespace

NodeId Graph::append(Op op, std::vector<std::size_t> parents) { return append(op, std::move(parents), Attrs{}); }

NodeId Graph::append(Op op, std::vector<std::size_t> parents, Attrs attrs) {
  const std::size_t index = nodes_.size();
  Node n{op, std::move(parents), std::move(attrs), Tensor{}, false, {}};
  std::vector<const Tensor*> in;
  in.reserve(n.parents.size());
  for (auto p : n.parents) {
    if (p >= index) fail("parent " + std::to_string(p) + " does not precede node", index, op);
    in.push_back(&nodes_[p].value);
    n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  }
  n.value = compute_checked(n, in, index);
  nodes_.push_back(std::move(n));
  return NodeId{index};
}

NodeId Graph::input(Tensor value, std::string name) {
  const std::size_t index = nodes_.size();
  if (!value.all_finite()) fail("non-finite input", index, Op::kInput);
  nodes_.push_back(Node{Op::kInput, {}, {}, std::move(value), false, std::move(name)});
  inputs_.push_back(NodeId{index});
  return NodeId{index};
}

NodeId Graph::parameter(Tensor value, std::string name) {
  const std::size_t index = nodes_.size();
  if (!value.all_finite()) fail("non-finite parameter", index, Op::kParameter);
  nodes_.push_back(Node{Op::kParameter, {}, {}, std::move(value), true, std::move(name)});
  parameters_.push_back(NodeId{index});
  return NodeId{index};
}

NodeId Graph::constant(Tensor value) {
  const std::size_t index = nodes_.size();
  if (!value.all_finite()) fail("non-finite constant", index, Op::kConstant);
  nodes_.push_back(Node{Op::kConstant, {}, {}, std::move(value), false, {}});
  return NodeId{index};
}

NodeId Graph::add(NodeId a, NodeId b) { return append(Op::kAdd, {a.index, b.index}); }
NodeId Graph::subtract(NodeId a, NodeId b) { return append(Op::kSubtract, {a.index, b.index}); }
NodeId Graph::multiply(NodeId a, NodeId b) { return append(Op::kMultiply, {a.index, b.index}); }
NodeId Graph::divide(NodeId a, NodeId b) { return append(Op::kDivide, {a.index, b.index}); }
NodeId Graph::matmul(NodeId a, NodeId b) { return append(Op::kMatmul, {a.index, b.index}); }
NodeId Graph::negate(NodeId x) { return append(Op::kNegate, {x.index}); }
NodeId Graph::square(NodeId x) { return append(Op::kSquare, {x.index}); }
NodeId Graph::exp(NodeId x) { return append(Op::kExp, {x.index}); }
NodeId Graph::log(NodeId x) { return append(Op::kLog, {x.index}); }
NodeId Graph::softplus(NodeId x) { return append(Op::kSoftplus, {x.index}); }
NodeId Graph::tanh(NodeId x) { return append(Op::kTanh, {x.index}); }
NodeId Graph::relu(NodeId x) { return append(Op::kRelu, {x.index}); }

NodeId Graph::sum(NodeId x, std::size_t axis, bool keep_dim) {
  Attrs a;
  a.axis = axis;
  a.keep_dim = keep_dim;
  return append(Op::kSum, {x.index}, std::move(a));
}

NodeId Graph::mean(NodeId x, std::size_t axis, bool keep_dim) {
  Attrs a;
  a.axis = axis;
  a.keep_dim = keep_dim;
  return append(Op::kMean, {x.index}, std::move(a));
}

NodeId Graph::logsumexp(NodeId x, std::size_t axis, bool keep_dim) {
  Attrs a;
  a.axis = axis;
  a.keep_dim = keep_dim;
  return append(Op::kLogSumExp, {x.index}, std::move(a));
}

NodeId Graph::sum_all(NodeId x) { return sum(reshape(x, Shape{value(x).size()}), 0); }

NodeId Graph::concat(std::span<const NodeId> parts, std::size_t axis) {
  if (parts.empty()) fail("concat of zero tensors", nodes_.size(), Op::kConcat);
  std::vector<std::size_t> parents;
  for (auto p : parts) parents.push_back(p.index);
  Attrs a;
  a.axis = axis;
  return append(Op::kConcat, std::move(parents), std::move(a));
}

NodeId Graph::index_select(NodeId x, std::size_t axis, std::vector<std::size_t> indices) {
  Attrs a;
  a.axis = axis;
  a.indices = std::move(indices);
  return append(Op::kIndexSelect, {x.index}, std::move(a));
}

NodeId Graph::scale(NodeId x, double factor) {
  Attrs a;
  a.a = factor;
  return append(Op::kScale, {x.index}, std::move(a));
}

NodeId Graph::shift(NodeId x, double offset) {
  Attrs a;
  a.a = offset;
  return append(Op::kShift, {x.index}, std::move(a));
}

NodeId Graph::clamp(NodeId x, double lo, double hi) {
  Attrs a;
  a.a = lo;
  a.b = hi;
  return append(Op::kClamp, {x.index}, std::move(a));
}

NodeId Graph::reshape(NodeId x, Shape shape) {
  Attrs a;
  a.shape = std::move(shape);
  return append(Op::kReshape, {x.index}, std::move(a));
}

std::vector<Tensor> evaluate(const Graph& graph, const Bindings& bindings) {
  std::vector<Tensor> values;
  values.reserve(graph.size());
  std::vector<const Tensor*> in;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto& n = graph.node(NodeId{i});
    if (n.op == Op::kInput || n.op == Op::kParameter || n.op == Op::kConstant) {
      auto it = bindings.find(NodeId{i});
      if (it != bindings.end() && n.op != Op::kConstant) {
        if (it->second.shape() != n.value.shape())
          fail("bound shape " + shape_string(it->second.shape()) + " differs from " + shape_string(n.value.shape()), i,
               n.op);
        if (!it->second.all_finite()) fail("non-finite binding", i, n.op);
        values.push_back(it->second);
      } else {
        values.push_back(n.value);
      }
      continue;
    }
    in.clear();
    for (auto p : n.parents) in.push_back(&values[p]);
    values.push_back(compute_checked(n, in, i));
  }
  return values;
}

std::vector<Tensor> gradient(const Graph& graph, NodeId output, std::span<const NodeId> wrt) {
  const Tensor& out_value = graph.value(output);
  if (out_value.size() != 1)
    throw GraphError("gradient requires a scalar output, got " + shape_string(out_value.shape()), output.index,
                     graph.node(output).op);

  const std::size_t count = output.index + 1;
  std::vector<Tensor> grads(count);
  std::vector<bool> has(count, false);
  auto accumulate = [&](std::size_t p, Tensor g) {
    if (!graph.node(NodeId{p}).needs_grad) return;
    if (!has[p]) {
      grads[p] = std::move(g);
      has[p] = true;
      return;
    }
    double* dst = grads[p].raw();
    const double* src = g.raw();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  };

  grads[output.index] = Tensor(out_value.shape(), 1.0);
  has[output.index] = true;

  for (std::size_t i = count; i-- > 0;) {
    if (!has[i]) continue;
    const auto& n = graph.node(NodeId{i});
    if (!n.needs_grad || n.parents.empty()) continue;
    const Tensor& g = grads[i];
    const Tensor& y = n.value;
    const auto& at = n.attrs;
    auto parent = [&](std::size_t k) -> const Tensor& { return graph.node(NodeId{n.parents[k]}).value; };
    auto wants = [&](std::size_t k) { return graph.node(NodeId{n.parents[k]}).needs_grad; };
    auto unary = [&](auto&& dfdx) {
      const Tensor& x = parent(0);
      Tensor gx(x.shape());
      for (std::size_t j = 0; j < x.size(); ++j) gx[j] = g[j] * dfdx(x[j], y[j]);
      accumulate(n.parents[0], std::move(gx));
    };

    switch (n.op) {
      case Op::kInput:
      case Op::kParameter:
      case Op::kConstant:
        break;
      case Op::kAdd:
      case Op::kSubtract:
      case Op::kMultiply:
      case Op::kDivide: {
        const Tensor& a = parent(0);
        const Tensor& b = parent(1);
        BroadcastPlan plan;
        plan_broadcast(a.shape(), b.shape(), plan);
        // Elementwise partials laid out in the output shape.
        Tensor da(plan.out);
        Tensor db(plan.out);
        auto fill = [&](auto&& fa, auto&& fb) {
          if (a.shape() == b.shape()) {
            for (std::size_t j = 0; j < a.size(); ++j) {
              da[j] = g[j] * fa(a[j], b[j]);
              db[j] = g[j] * fb(a[j], b[j]);
            }
          } else {
            for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
              da[o] = g[o] * fa(a[ia], b[ib]);
              db[o] = g[o] * fb(a[ia], b[ib]);
            });
          }
        };
        switch (n.op) {
          case Op::kAdd:
            fill([](double, double) { return 1.0; }, [](double, double) { return 1.0; });
            break;
          case Op::kSubtract:
            fill([](double, double) { return 1.0; }, [](double, double) { return -1.0; });
            break;
          case Op::kMultiply:
            fill([](double, double bv) { return bv; }, [](double av, double) { return av; });
            break;
          default:
            fill([](double, double bv) { return 1.0 / bv; }, [](double av, double bv) { return -av / (bv * bv); });
            break;
        }
        if (wants(0)) accumulate(n.parents[0], reduce_to(da, a.shape(), plan, true));
        if (wants(1)) accumulate(n.parents[1], reduce_to(db, b.shape(), plan, false));
        break;
      }
      case Op::kMatmul: {
        const Tensor& a = parent(0);
        const Tensor& b = parent(1);
        if (wants(0)) {
          Tensor ga(a.shape());
          ga.matrix().noalias() = g.matrix() * b.matrix().transpose();
          accumulate(n.parents[0], std::move(ga));
        }
        if (wants(1)) {
          Tensor gb(b.shape());
          gb.matrix().noalias() = a.matrix().transpose() * g.matrix();
          accumulate(n.parents[1], std::move(gb));
        }
        break;
      }
      case Op::kNegate: unary([](double, double) { return -1.0; }); break;
      case Op::kSquare: unary([](double x, double) { return 2.0 * x; }); break;
      case Op::kExp: unary([](double, double yv) { return yv; }); break;
      case Op::kLog: unary([](double x, double) { return 1.0 / x; }); break;
      case Op::kSoftplus: unary([](double x, double) { return sigmoid(x); }); break;
      case Op::kTanh: unary([](double, double yv) { return 1.0 - yv * yv; }); break;
      case Op::kRelu: unary([](double x, double) { return x > 0.0 ? 1.0 : 0.0; }); break;
      case Op::kScale: unary([f = at.a](double, double) { return f; }); break;
      case Op::kShift: unary([](double, double) { return 1.0; }); break;
      case Op::kClamp:
        unary([lo = at.a, hi = at.b](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
        break;
      case Op::kReshape:
        accumulate(n.parents[0], g.reshaped(parent(0).shape()));
        break;
      case Op::kSum:
      case Op::kMean:
      case Op::kLogSumExp: {
        const Tensor& x = parent(0);
        const auto s = split_axis(x.shape(), at.axis);
        Tensor gx(x.shape());
        const double norm = n.op == Op::kMean ? 1.0 / static_cast<double>(s.extent) : 1.0;
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t k = 0; k < s.extent; ++k)
            for (std::size_t j = 0; j < s.inner; ++j) {
              const std::size_t xi = (o * s.extent + k) * s.inner + j;
              const std::size_t ri = o * s.inner + j;
              gx[xi] = n.op == Op::kLogSumExp ? g[ri] * std::exp(x[xi] - y[ri]) : g[ri] * norm;
            }
        accumulate(n.parents[0], std::move(gx));
        break;
      }
      case Op::kConcat: {
        const auto so = split_axis(y.shape(), at.axis);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
          const Tensor& part = parent(k);
          const auto sp = split_axis(part.shape(), at.axis);
          if (wants(k)) {
            Tensor gp(part.shape());
            const std::size_t chunk = sp.extent * sp.inner;
            for (std::size_t o = 0; o < so.outer; ++o)
              std::copy_n(g.raw() + o * so.extent * so.inner + offset * so.inner, chunk, gp.raw() + o * chunk);
            accumulate(n.parents[k], std::move(gp));
          }
          offset += sp.extent;
        }
        break;
      }
      case Op::kIndexSelect: {
        const Tensor& x = parent(0);
        const auto s = split_axis(x.shape(), at.axis);
        Tensor gx(x.shape(), 0.0);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t k = 0; k < at.indices.size(); ++k) {
            const double* src = g.raw() + (o * at.indices.size() + k) * s.inner;
            double* dst = gx.raw() + (o * s.extent + at.indices[k]) * s.inner;
            for (std::size_t j = 0; j < s.inner; ++j) dst[j] += src[j];
          }
        accumulate(n.parents[0], std::move(gx));
        break;
      }
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (NodeId w : wrt) {
    if (w.index < count && has[w.index])
      result.push_back(grads[w.index]);
    else
      result.emplace_back(graph.value(w).shape(), 0.0);
  }
  return result;
}

double finite_diff_check(const Graph& graph, NodeId output, std::span<const NodeId> params, double eps) {
  const auto analytic = gradient(graph, output, params);
  double worst = 0.0;
  Bindings bindings;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor base = graph.value(params[p]);
    for (std::size_t j = 0; j < base.size(); ++j) {
      Tensor plus = base;
      Tensor minus = base;
      plus[j] += eps;
      minus[j] -= eps;
      bindings[params[p]] = std::move(plus);
      const double f_plus = evaluate(graph, bindings)[output.index].item();
      bindings[params[p]] = std::move(minus);
      const double f_minus = evaluate(graph, bindings)[output.index].item();
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double err = std::abs(analytic[p][j] - numeric) / std::max(1e-8, std::abs(numeric));
      worst = std::max(worst, err);
    }
    bindings.erase(params[p]);
  }
  return worst;
}

}  // namespace poem
