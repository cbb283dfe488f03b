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
#include <functional>

#include "poem/autodiff.hpp"
#include "poem/rng.hpp"

using namespace poem;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Flat index -> multi-index for a row-major shape.
std::vector<std::size_t> unravel(std::size_t flat, const Shape& shape) {
  std::vector<std::size_t> idx(shape.size());
  for (std::size_t k = shape.size(); k-- > 0;) {
    idx[k] = flat % shape[k];
    flat /= shape[k];
  }
  return idx;
}

// Reads `t` at the broadcast position of an output multi-index.
double broadcast_read(const Tensor& t, const std::vector<std::size_t>& out_idx) {
  const std::size_t offset = out_idx.size() - t.rank();
  std::size_t flat = 0;
  for (std::size_t k = 0; k < t.rank(); ++k) {
    const std::size_t i = t.extent(k) == 1 ? 0 : out_idx[offset + k];
    flat = flat * t.extent(k) + i;
  }
  return t[flat];
}

}  // namespace

TEST_CASE("derivative of x^2 at 3 is 6") {
  Graph g;
  const NodeId x = g.parameter(Tensor::scalar(3.0));
  const NodeId y = g.square(x);
  const auto grads = gradient(g, y, std::vector<NodeId>{x});
  CHECK(grads[0].item() == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("softplus derivative at 1 is the logistic function") {
  Graph g;
  const NodeId x = g.parameter(Tensor::scalar(1.0));
  const auto grads = gradient(g, g.softplus(x), std::vector<NodeId>{x});
  CHECK(grads[0].item() == doctest::Approx(0.7310585786300049).epsilon(1e-14));
}

TEST_CASE("logsumexp gradient at [0, 0] is [0.5, 0.5]") {
  Graph g;
  const NodeId v = g.parameter(Tensor::vector({0.0, 0.0}));
  const NodeId out = g.logsumexp(v, 0);
  CHECK(g.value(out).item() == doctest::Approx(std::log(2.0)));
  const auto grads = gradient(g, out, std::vector<NodeId>{v});
  CHECK(grads[0][0] == doctest::Approx(0.5));
  CHECK(grads[0][1] == doctest::Approx(0.5));
}

TEST_CASE("matmul of [[1,2],[3,4]] and [[1],[1]]") {
  Graph g;
  const NodeId a = g.input(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const NodeId b = g.input(Tensor::matrix(2, 1, {1, 1}));
  const Tensor& c = g.value(g.matmul(a, b));
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c[0] == 3.0);
  CHECK(c[1] == 7.0);
}

TEST_CASE("logsumexp stays finite for large inputs") {
  Graph g;
  const NodeId v = g.input(Tensor::vector({1000.0, 1000.0}));
  CHECK(g.value(g.logsumexp(v, 0)).item() == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("broadcast binary ops agree with an index loop") {
  Rng rng(11);
  const std::vector<std::pair<Shape, Shape>> cases = {
      {{3, 4}, {3, 4}}, {{3, 4}, {1, 4}}, {{3, 4}, {3, 1}}, {{3, 4}, {4}},    {{2, 1, 5}, {1, 3, 5}},
      {{2, 3, 5}, {5}}, {{1}, {2, 3}},    {{}, {2, 2}},     {{4, 1}, {1, 6}}, {{2, 1, 3}, {4, 1}}};
  for (const auto& [sa, sb] : cases) {
    const Tensor a = random_tensor(rng, sa, 0.5, 2.0);
    const Tensor b = random_tensor(rng, sb, 0.5, 2.0);
    Graph g;
    const NodeId na = g.input(a), nb = g.input(b);
    const std::vector<std::pair<NodeId, std::function<double(double, double)>>> ops = {
        {g.add(na, nb), std::plus<>()},
        {g.subtract(na, nb), std::minus<>()},
        {g.multiply(na, nb), std::multiplies<>()},
        {g.divide(na, nb), std::divides<>()}};
    for (const auto& [node, fn] : ops) {
      const Tensor& out = g.value(node);
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto idx = unravel(i, out.shape());
        CHECK(out[i] == fn(broadcast_read(a, idx), broadcast_read(b, idx)));
      }
    }
  }
}

TEST_CASE("incompatible broadcast shapes are rejected with the node named") {
  Graph g;
  const NodeId a = g.input(Tensor(Shape{3, 4}));
  const NodeId b = g.input(Tensor(Shape{2, 4}));
  try {
    g.add(a, b);
    FAIL("expected GraphError");
  } catch (const GraphError& e) {
    CHECK(e.op() == Op::kAdd);
    CHECK(e.node() == 2);
  }
  BroadcastPlan plan;
  CHECK_FALSE(plan_broadcast({3, 4}, {2, 4}, plan));
  REQUIRE(plan_broadcast({3, 1}, {4}, plan));
  CHECK(plan.out == Shape{3, 4});
}

TEST_CASE("non-finite values raise GraphError naming the op") {
  Graph g;
  const NodeId x = g.input(Tensor::vector({1.0, -1.0}));
  try {
    g.log(x);
    FAIL("expected GraphError");
  } catch (const GraphError& e) {
    CHECK(e.op() == Op::kLog);
  }
  const NodeId zero = g.input(Tensor::scalar(0.0));
  CHECK_THROWS_AS(g.divide(x, zero), GraphError);
  CHECK_THROWS_AS(g.exp(g.input(Tensor::scalar(1000.0))), GraphError);
}

TEST_CASE("finite differences are exact for a quadratic") {
  Rng rng(3);
  Graph g;
  const NodeId a = g.parameter(random_tensor(rng, {3, 2}));
  const NodeId b = g.parameter(random_tensor(rng, {2, 4}));
  const NodeId c = g.input(random_tensor(rng, {3, 4}));
  const NodeId loss = g.sum_all(g.square(g.subtract(g.matmul(a, b), c)));
  CHECK(finite_diff_check(g, loss, std::vector<NodeId>{a, b}) < 1e-9);
}

TEST_CASE("finite differences agree on a two-layer tanh network") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    Graph g;
    const NodeId x = g.input(random_tensor(rng, {5, 4}));
    const NodeId w1 = g.parameter(random_tensor(rng, {4, 6}));
    const NodeId b1 = g.parameter(random_tensor(rng, {1, 6}));
    const NodeId w2 = g.parameter(random_tensor(rng, {6, 3}));
    const NodeId h = g.tanh(g.add(g.matmul(x, w1), b1));
    const NodeId out = g.mean(g.logsumexp(g.matmul(h, w2), 1), 0);
    CHECK(finite_diff_check(g, out, std::vector<NodeId>{w1, b1, w2}) < 1e-4);
  }
}

TEST_CASE("every differentiable op passes finite differences") {
  Rng rng(21);
  Graph g;
  const NodeId p = g.parameter(random_tensor(rng, {3, 4}, 0.2, 1.5));
  const NodeId q = g.parameter(random_tensor(rng, {1, 4}, 0.2, 1.5));
  const NodeId r = g.parameter(random_tensor(rng, {3, 1}, 0.2, 1.5));
  std::vector<NodeId> terms;
  terms.push_back(g.sum_all(g.add(p, q)));
  terms.push_back(g.sum_all(g.subtract(r, p)));
  terms.push_back(g.sum_all(g.multiply(p, r)));
  terms.push_back(g.sum_all(g.divide(p, q)));
  terms.push_back(g.sum_all(g.negate(g.square(p))));
  terms.push_back(g.sum_all(g.exp(g.scale(p, 0.5))));
  terms.push_back(g.sum_all(g.log(g.shift(p, 1.0))));
  terms.push_back(g.sum_all(g.softplus(p)));
  terms.push_back(g.sum_all(g.tanh(p)));
  terms.push_back(g.sum_all(g.relu(g.shift(p, -0.85))));
  terms.push_back(g.sum_all(g.square(g.sum(p, 0, true))));
  terms.push_back(g.sum_all(g.square(g.mean(p, 1))));
  terms.push_back(g.sum_all(g.logsumexp(p, 1, true)));
  const std::vector<NodeId> parts{p, r};
  terms.push_back(g.sum_all(g.square(g.concat(std::span<const NodeId>(parts.data(), 1), 1))));
  terms.push_back(g.sum_all(g.square(g.concat(std::vector<NodeId>{p, g.square(q)}, 0))));
  terms.push_back(g.sum_all(g.square(g.index_select(p, 0, {2, 0, 2}))));
  terms.push_back(g.sum_all(g.square(g.clamp(p, 0.4, 1.2))));
  terms.push_back(g.sum_all(g.square(g.reshape(p, {2, 6}))));
  terms.push_back(g.sum_all(g.matmul(p, g.reshape(g.square(q), {4, 1}))));
  NodeId total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = g.add(total, terms[i]);
  const double err = finite_diff_check(g, total, std::vector<NodeId>{p, q, r});
  CHECK(err < 1e-6);
}

TEST_CASE("index_select accumulates gradient for repeated rows") {
  Graph g;
  const NodeId x = g.parameter(Tensor::matrix(3, 1, {1, 2, 3}));
  const NodeId y = g.sum_all(g.index_select(x, 0, {0, 0, 2}));
  const auto grads = gradient(g, y, std::vector<NodeId>{x});
  CHECK(grads[0][0] == 2.0);
  CHECK(grads[0][1] == 0.0);
  CHECK(grads[0][2] == 1.0);
}

TEST_CASE("clamp blocks the gradient outside its range") {
  Graph g;
  const NodeId x = g.parameter(Tensor::vector({-1.0, 0.5, 3.0}));
  const auto grads = gradient(g, g.sum_all(g.clamp(x, 0.0, 1.0)), std::vector<NodeId>{x});
  CHECK(grads[0][0] == 0.0);
  CHECK(grads[0][1] == 1.0);
  CHECK(grads[0][2] == 0.0);
}

TEST_CASE("evaluate replays with new bindings and leaves the graph alone") {
  Graph g;
  const NodeId x = g.input(Tensor::scalar(2.0));
  const NodeId w = g.parameter(Tensor::scalar(3.0));
  const NodeId y = g.add(g.multiply(w, x), g.square(x));
  CHECK(g.value(y).item() == 10.0);
  const auto values = evaluate(g, {{x, Tensor::scalar(5.0)}});
  CHECK(values[y.index].item() == 40.0);
  CHECK(g.value(y).item() == 10.0);
  const auto unbound = evaluate(g, {});
  CHECK(unbound[y.index].item() == 10.0);
}

TEST_CASE("gradient of an unused parameter is zero and non-scalar outputs are refused") {
  Graph g;
  const NodeId a = g.parameter(Tensor::vector({1, 2}));
  const NodeId unused = g.parameter(Tensor(Shape{2, 2}, 1.0));
  const NodeId out = g.sum_all(g.square(a));
  const auto grads = gradient(g, out, std::vector<NodeId>{a, unused});
  CHECK(grads[1].shape() == Shape{2, 2});
  for (double v : grads[1].data()) CHECK(v == 0.0);
  CHECK_THROWS(gradient(g, g.square(a), std::vector<NodeId>{a}));
}

TEST_CASE("graph records parameters and inputs in creation order") {
  Graph g;
  const NodeId i0 = g.input(Tensor::scalar(1), "x");
  const NodeId p0 = g.parameter(Tensor::scalar(2), "w");
  const NodeId p1 = g.parameter(Tensor::scalar(3));
  CHECK(g.inputs() == std::vector<NodeId>{i0});
  CHECK(g.parameters() == std::vector<NodeId>{p0, p1});
  CHECK(g.node(p0).name == "w");
  CHECK(op_name(g.node(i0).op) == "input");
}
