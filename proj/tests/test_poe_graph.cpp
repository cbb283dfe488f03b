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
#include <vector>

#include "poem/autodiff.hpp"
#include "poem/gaussian.hpp"
#include "poem/poe_graph.hpp"
#include "poem/rng.hpp"

using namespace poem;

namespace {

using G = DiagGaussian<double>;

struct RandomEpisode {
  std::vector<std::vector<G>> support;
  std::vector<G> queries;
  std::vector<std::size_t> views;
  std::vector<std::size_t> targets;
  std::size_t dim = 0;
};

RandomEpisode random_episode(Rng& rng, std::size_t items, std::size_t dim, bool unit_precision, bool equal_views) {
  RandomEpisode ep;
  ep.dim = dim;
  const std::size_t shared_v = rng.index(1, 4);
  auto draw = [&] {
    Vec<double> m(dim), p(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      m(d) = rng.normal();
      p(d) = unit_precision ? 1.0 : rng.uniform(0.2, 5.0);
    }
    return G(m, p);
  };
  for (std::size_t i = 0; i < items; ++i) {
    const std::size_t v = equal_views ? shared_v : rng.index(1, 5);
    ep.views.push_back(v);
    ep.support.emplace_back();
    for (std::size_t k = 0; k < v; ++k) ep.support.back().push_back(draw());
  }
  for (std::size_t n = 0; n < items; ++n) {
    ep.queries.push_back(draw());
    ep.targets.push_back(n);
  }
  return ep;
}

Tensor stack(const std::vector<G>& gs, bool precision) {
  Tensor t(Shape{gs.size(), static_cast<std::size_t>(gs.front().dim())});
  for (std::size_t r = 0; r < gs.size(); ++r)
    for (Eigen::Index d = 0; d < gs[r].dim(); ++d)
      t.at(r, static_cast<std::size_t>(d)) = precision ? gs[r].precision(d) : gs[r].mean(d);
  return t;
}

std::vector<G> flatten(const std::vector<std::vector<G>>& sets) {
  std::vector<G> out;
  for (const auto& s : sets) out.insert(out.end(), s.begin(), s.end());
  return out;
}

}  // namespace

TEST_CASE("assignment matrix") {
  const Tensor a = assignment_matrix({2, 1});
  CHECK(a.shape() == Shape{2, 3});
  const auto d = a.data();
  CHECK(std::vector<double>(d.begin(), d.end()) == std::vector<double>{1, 1, 0, 0, 0, 1});
}

TEST_CASE("graph scores equal the closed form in both prior modes") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ep = random_episode(rng, rng.index(2, 5), 3, false, false);
    for (const auto& prior : {PriorSpec<double>::neglect(), PriorSpec<double>::gaussian(3, 0.2, 0.05)}) {
      Graph g;
      const auto rows = flatten(ep.support);
      const GaussianNodes s{g.input(stack(rows, false)), g.input(stack(rows, true))};
      const GaussianNodes q{g.input(stack(ep.queries, false)), g.input(stack(ep.queries, true))};
      const NodeId scores = poem_score_nodes(g, fuse_support_nodes(g, s, ep.views), q, prior);
      const auto exact = episode_scores(ep.support, ep.queries, prior, ep.targets);
      const Tensor& got = g.value(scores);
      for (std::size_t n = 0; n < ep.queries.size(); ++n)
        for (std::size_t m = 0; m < ep.support.size(); ++m)
          CHECK(got.at(n, m) ==
                doctest::Approx(exact.values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)))
                    .epsilon(1e-12));
      CHECK(g.value(nll_node(g, scores, ep.targets)).item() == doctest::Approx(poem_nll(exact)).epsilon(1e-12));
    }
  }
}

TEST_CASE("closed-form unit-precision scores equal unit-precision POEM") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ep = random_episode(rng, rng.index(2, 6), 4, true, false);
    Graph g;
    const auto rows = flatten(ep.support);
    const NodeId sm = g.input(stack(rows, false));
    const NodeId qm = g.input(stack(ep.queries, false));
    const NodeId a4 = a4_score_nodes(g, sm, qm, ep.views);
    const auto exact = episode_scores(ep.support, ep.queries, PriorSpec<double>::neglect(), ep.targets);
    // Equal up to a per-row constant, so softmax probabilities agree.
    const double a4_nll = g.value(nll_node(g, a4, ep.targets)).item();
    CHECK(a4_nll == doctest::Approx(poem_nll(exact)).epsilon(1e-10));
  }
}

TEST_CASE("with equal support sizes unit-precision POEM ranks like ProtoNet") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ep = random_episode(rng, 5, 3, true, true);
    Graph g;
    const auto rows = flatten(ep.support);
    const NodeId sm = g.input(stack(rows, false));
    const NodeId qm = g.input(stack(ep.queries, false));
    const Tensor a4 = g.value(a4_score_nodes(g, sm, qm, ep.views));
    const Tensor proto = g.value(proto_score_nodes(g, sm, qm, ep.views));
    for (std::size_t n = 0; n < 5; ++n) {
      std::size_t best_a = 0, best_p = 0;
      for (std::size_t m = 1; m < 5; ++m) {
        if (a4.at(n, m) > a4.at(n, best_a)) best_a = m;
        if (proto.at(n, m) > proto.at(n, best_p)) best_p = m;
      }
      CHECK(best_a == best_p);
    }
  }
}

TEST_CASE("score graph passes finite differences through means and precisions") {
  Rng rng(43);
  const auto ep = random_episode(rng, 3, 2, false, false);
  const auto prior = PriorSpec<double>::gaussian(2, 0.0, 0.5);
  Graph g;
  const auto rows = flatten(ep.support);
  const NodeId sm = g.parameter(stack(rows, false));
  const NodeId sp = g.parameter(stack(rows, true));
  const NodeId qm = g.parameter(stack(ep.queries, false));
  const NodeId qp = g.parameter(stack(ep.queries, true));
  const NodeId loss =
      nll_node(g, poem_score_nodes(g, fuse_support_nodes(g, {sm, sp}, ep.views), {qm, qp}, prior), ep.targets);
  CHECK(finite_diff_check(g, loss, std::vector<NodeId>{sm, sp, qm, qp}) < 1e-5);
}

TEST_CASE("a one-way episode has zero loss") {
  Rng rng(47);
  const auto ep = random_episode(rng, 1, 3, false, false);
  Graph g;
  const auto rows = flatten(ep.support);
  const GaussianNodes s{g.input(stack(rows, false)), g.input(stack(rows, true))};
  const GaussianNodes q{g.input(stack(ep.queries, false)), g.input(stack(ep.queries, true))};
  const NodeId scores = poem_score_nodes(g, fuse_support_nodes(g, s, ep.views), q, PriorSpec<double>::neglect());
  CHECK(g.value(nll_node(g, scores, ep.targets)).item() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS(nll_node(g, scores, {1}));
}
