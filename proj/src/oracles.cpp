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

#include "poem/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "poem/episodes.hpp"
#include "poem/gridworld.hpp"
#include "poem/models.hpp"
#include "poem/poe_graph.hpp"
#include "poem/quadrature.hpp"
#include "poem/rng.hpp"
#include "poem/trainer.hpp"

namespace poem {
namespace {

using Clock = std::chrono::steady_clock;

DiagGaussian<double> random_factor(Rng& rng, Eigen::Index dim, double mu_lo = -3.0, double mu_hi = 3.0,
                                   double tau_lo = 0.1, double tau_hi = 10.0) {
  DiagGaussian<double> f = DiagGaussian<double>::constant(dim, 0.0, 1.0);
  for (Eigen::Index d = 0; d < dim; ++d) {
    f.mean(d) = rng.uniform(mu_lo, mu_hi);
    f.precision(d) = rng.uniform(tau_lo, tau_hi);
  }
  return f;
}

nlohmann::json factor_json(const DiagGaussian<double>& f) {
  return {{"mean", std::vector<double>(f.mean.data(), f.mean.data() + f.dim())},
          {"precision", std::vector<double>(f.precision.data(), f.precision.data() + f.dim())}};
}

nlohmann::json factors_json(std::span<const DiagGaussian<double>> fs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& f : fs) out.push_back(factor_json(f));
  return out;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Records one comparison; keeps the first failing case for replay.
// `also_failed` flags a secondary check that has its own tolerance.
void record(SuiteResult& r, double err, const nlohmann::json& replay, bool also_failed = false) {
  ++r.cases;
  if (!(err <= r.tolerance) || also_failed) {
    if (r.failures == 0) r.first_failure = replay;
    ++r.failures;
  }
  if (!(err <= r.worst)) r.worst = err;  // NaN propagates into `worst`
}

SuiteResult start(std::string name, double tolerance) {
  SuiteResult r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  return r;
}

void finish(SuiteResult& r, Clock::time_point t0) {
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor column(const std::vector<double>& v) { return Tensor(Shape{v.size(), 1}, v); }

}  // namespace

ProductFn default_product() {
  return [](std::span<const DiagGaussian<double>> fs) { return gaussian_product(fs); };
}

ProductFn faulty_product() {
  return [](std::span<const DiagGaussian<double>> fs) {
    auto out = gaussian_product(fs);
    for (const auto& f : fs)
      out.log_norm_per_dim += f.precision.cwiseProduct((f.mean - out.product.mean).cwiseAbs2());
    return out;
  };
}

SuiteResult gaussian_product_suite(std::uint64_t seed, std::size_t instances, double tolerance,
                                   const ProductFn& product) {
  const auto t0 = Clock::now();
  SuiteResult r = start("gaussian-product", tolerance);
  Rng rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t k = rng.index(1, 5);
    std::vector<DiagGaussian<double>> fs;
    std::vector<Factor1D> fs1d;
    for (std::size_t j = 0; j < k; ++j) {
      fs.push_back(random_factor(rng, 1));
      fs1d.push_back({fs.back().mean(0), fs.back().precision(0)});
    }
    const double analytic = product(fs).log_norm();
    const double numeric = log_integral_trapezoid(fs1d);
    const double err = std::abs(std::expm1(analytic - numeric));
    record(r, err, {{"instance", i}, {"factors", factors_json(fs)}, {"analytic_log_s", analytic},
                    {"quadrature_log_s", numeric}});
  }
  finish(r, t0);
  return r;
}

SuiteResult predictive_suite(std::uint64_t seed, std::size_t episodes, double tolerance) {
  const auto t0 = Clock::now();
  SuiteResult r = start("predictive-ratio", tolerance);
  Rng rng(seed);
  double worst_graph = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const bool gaussian = e % 2 == 1;
    const PriorSpec<double> prior =
        gaussian ? PriorSpec<double>::gaussian(1, rng.uniform(-1.0, 1.0), rng.uniform(kDefaultPriorPrecision, 1.0))
                 : PriorSpec<double>::neglect();
    std::vector<std::vector<DiagGaussian<double>>> support(3);
    std::vector<std::vector<Factor1D>> support1d(3);
    std::vector<std::size_t> vpi;
    std::vector<double> s_mu, s_tau, q_mu, q_tau;
    for (std::size_t m = 0; m < 3; ++m) {
      const std::size_t v = rng.index(1, 3);
      vpi.push_back(v);
      for (std::size_t j = 0; j < v; ++j) {
        support[m].push_back(random_factor(rng, 1));
        support1d[m].push_back({support[m].back().mean(0), support[m].back().precision(0)});
        s_mu.push_back(support[m].back().mean(0));
        s_tau.push_back(support[m].back().precision(0));
      }
    }
    std::vector<DiagGaussian<double>> queries;
    std::vector<Factor1D> queries1d;
    for (std::size_t n = 0; n < 3; ++n) {
      queries.push_back(random_factor(rng, 1));
      queries1d.push_back({queries.back().mean(0), queries.back().precision(0)});
      q_mu.push_back(queries.back().mean(0));
      q_tau.push_back(queries.back().precision(0));
    }

    const auto closed = episode_scores(support, queries, prior);
    const auto brute = brute_force_predictive(support1d, queries1d, prior);

    // The autodiff path used in training must agree with the closed form too.
    Graph g;
    const GaussianNodes items = fuse_support_nodes(g, {g.input(column(s_mu)), g.input(column(s_tau))}, vpi);
    const NodeId graph_scores =
        poem_score_nodes(g, items, {g.input(column(q_mu)), g.input(column(q_tau))}, prior);
    const Tensor& gs = g.value(graph_scores);

    double err = 0.0;
    double graph_err = 0.0;
    for (Eigen::Index n = 0; n < closed.queries(); ++n)
      for (Eigen::Index m = 0; m < closed.items(); ++m) {
        err = std::max(err, std::abs(std::expm1(closed.values(n, m) - brute.values(n, m))));
        graph_err = std::max(graph_err, rel_diff(gs.at(static_cast<std::size_t>(n), static_cast<std::size_t>(m)),
                                                 closed.values(n, m)));
      }
    worst_graph = std::max(worst_graph, graph_err);
    nlohmann::json support_json = nlohmann::json::array();
    for (const auto& s : support) support_json.push_back(factors_json(s));
    record(r, err,
           {{"episode", e},
            {"prior", gaussian ? "gaussian" : "neglect"},
            {"prior_mean", gaussian ? prior.mean(0) : 0.0},
            {"prior_precision", gaussian ? prior.precision(0) : 0.0},
            {"support", support_json},
            {"queries", factors_json(queries)}},
           !(graph_err <= 1e-9));
  }
  r.details["graph_vs_closed_form"] = worst_graph;
  finish(r, t0);
  return r;
}

SuiteResult invariant_suite(std::uint64_t seed, std::size_t instances, double tolerance, const ProductFn& product) {
  const auto t0 = Clock::now();
  SuiteResult r = start("product-invariants", tolerance);
  Rng rng(seed);
  double worst_assoc = 0.0, worst_perm = 0.0, worst_add = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const auto dim = static_cast<Eigen::Index>(rng.index(1, 4));
    const std::size_t k = rng.index(3, 6);
    std::vector<DiagGaussian<double>> fs;
    for (std::size_t j = 0; j < k; ++j) fs.push_back(random_factor(rng, dim));

    const auto whole = product(fs);

    // Associativity: fold a prefix into one factor, then multiply the rest.
    const std::size_t split = rng.index(2, k - 1);
    const auto head = product(std::span<const DiagGaussian<double>>(fs.data(), split));
    std::vector<DiagGaussian<double>> rest{head.product};
    rest.insert(rest.end(), fs.begin() + static_cast<std::ptrdiff_t>(split), fs.end());
    const auto tail = product(rest);
    double assoc = 0.0;
    for (Eigen::Index d = 0; d < dim; ++d) {
      assoc = std::max(assoc, rel_diff(tail.product.mean(d), whole.product.mean(d)));
      assoc = std::max(assoc, rel_diff(tail.product.precision(d), whole.product.precision(d)));
      assoc = std::max(assoc,
                       rel_diff(head.log_norm_per_dim(d) + tail.log_norm_per_dim(d), whole.log_norm_per_dim(d)));
    }

    std::vector<DiagGaussian<double>> shuffled = fs;
    rng.shuffle(shuffled);
    const auto perm = product(shuffled);
    double perm_err = 0.0;
    for (Eigen::Index d = 0; d < dim; ++d) {
      perm_err = std::max(perm_err, rel_diff(perm.product.mean(d), whole.product.mean(d)));
      perm_err = std::max(perm_err, rel_diff(perm.product.precision(d), whole.product.precision(d)));
      perm_err = std::max(perm_err, rel_diff(perm.log_norm_per_dim(d), whole.log_norm_per_dim(d)));
    }

    Vec<double> tau_sum = Vec<double>::Zero(dim);
    for (const auto& f : fs) tau_sum += f.precision;
    double add = 0.0;
    for (Eigen::Index d = 0; d < dim; ++d) add = std::max(add, rel_diff(whole.product.precision(d), tau_sum(d)));

    worst_assoc = std::max(worst_assoc, assoc);
    worst_perm = std::max(worst_perm, perm_err);
    worst_add = std::max(worst_add, add);
    record(r, std::max({assoc, perm_err, add}), {{"instance", i}, {"split", split}, {"factors", factors_json(fs)}});
  }
  r.details = {{"associativity", worst_assoc}, {"permutation", worst_perm}, {"additivity", worst_add}};
  finish(r, t0);
  return r;
}

SuiteResult a4_suite(std::uint64_t seed, std::size_t episodes, double tolerance) {
  const auto t0 = Clock::now();
  SuiteResult r = start("a4-equivalence", tolerance);
  Rng rng(seed);
  std::size_t argmax_agree = 0;
  double worst_graph = 0.0;
  for (std::size_t e = 0; e < 2 * episodes; ++e) {
    const bool equal_v = e >= episodes;
    const auto dim = static_cast<Eigen::Index>(rng.index(2, 6));
    const std::size_t items = rng.index(3, 6);
    std::vector<std::size_t> vpi(items);
    if (equal_v) {
      std::fill(vpi.begin(), vpi.end(), rng.index(1, 6));
    } else {
      do {
        for (auto& v : vpi) v = rng.index(1, 6);
      } while (std::adjacent_find(vpi.begin(), vpi.end(), std::not_equal_to<>()) == vpi.end());
    }

    std::vector<std::vector<DiagGaussian<double>>> support(items);
    std::vector<std::vector<Eigen::VectorXd>> support_means(items);
    std::vector<double> flat_support;
    for (std::size_t m = 0; m < items; ++m)
      for (std::size_t j = 0; j < vpi[m]; ++j) {
        Eigen::VectorXd mu(dim);
        for (Eigen::Index d = 0; d < dim; ++d) mu(d) = rng.normal();
        support[m].emplace_back(mu, Vec<double>::Ones(dim));
        support_means[m].push_back(mu);
        flat_support.insert(flat_support.end(), mu.data(), mu.data() + dim);
      }
    std::vector<DiagGaussian<double>> queries;
    std::vector<double> flat_queries;
    for (std::size_t n = 0; n < 2 * items; ++n) {
      Eigen::VectorXd mu(dim);
      for (Eigen::Index d = 0; d < dim; ++d) mu(d) = rng.normal();
      queries.emplace_back(mu, Vec<double>::Ones(dim));
      flat_queries.insert(flat_queries.end(), mu.data(), mu.data() + dim);
    }

    const auto scores = episode_scores(support, queries, PriorSpec<double>::neglect());
    const auto udim = static_cast<std::size_t>(dim);
    Graph g;
    const NodeId s_mean = g.input(Tensor(Shape{flat_support.size() / udim, udim}, flat_support));
    const NodeId q_mean = g.input(Tensor(Shape{queries.size(), udim}, flat_queries));
    const Tensor& graph_scores = g.value(a4_score_nodes(g, s_mean, q_mean, vpi));

    if (!equal_v) {
      double err = 0.0;
      double graph_err = 0.0;
      for (std::size_t n = 0; n < queries.size(); ++n) {
        const auto expected = a4_probabilities(support_means, queries[n].mean);
        const auto row = scores.values.row(static_cast<Eigen::Index>(n));
        const double lse = row.maxCoeff() + std::log((row.array() - row.maxCoeff()).exp().sum());
        double g_max = -1e300;
        for (std::size_t m = 0; m < items; ++m) g_max = std::max(g_max, graph_scores.at(n, m));
        double g_sum = 0.0;
        for (std::size_t m = 0; m < items; ++m) g_sum += std::exp(graph_scores.at(n, m) - g_max);
        for (std::size_t m = 0; m < items; ++m) {
          err = std::max(err, std::abs(std::exp(row(static_cast<Eigen::Index>(m)) - lse) - expected[m]));
          graph_err = std::max(graph_err, std::abs(std::exp(graph_scores.at(n, m) - g_max) / g_sum - expected[m]));
        }
      }
      worst_graph = std::max(worst_graph, graph_err);
      record(r, std::max(err, graph_err), {{"episode", e}, {"views_per_item", vpi}, {"dim", dim}});
    } else {
      const auto pred = predictions(scores);
      bool agree = true;
      for (std::size_t n = 0; n < queries.size(); ++n) {
        const auto proto = proto_scores(support_means, queries[n].mean);
        const auto best = static_cast<std::size_t>(std::max_element(proto.begin(), proto.end()) - proto.begin());
        agree = agree && best == pred[n];
      }
      argmax_agree += agree ? 1 : 0;
      record(r, agree ? 0.0 : 1.0, {{"episode", e}, {"views_per_item", vpi}, {"dim", dim}, {"check", "argmax"}});
    }
  }
  r.details = {{"argmax_agreement", argmax_agree}, {"argmax_episodes", episodes}, {"graph_vs_closed_form", worst_graph}};
  finish(r, t0);
  return r;
}

SuiteResult gradient_suite(std::uint64_t seed, std::size_t points, double tolerance, double eps) {
  const auto t0 = Clock::now();
  SuiteResult r = start("gradient-check", tolerance);
  SamplerConfig sampler = SamplerConfig::desk();
  sampler.pool.master_seed = seed;
  const ImageEpisodeSource source(sampler, Condition::kPartial, stream_seed(seed, Stream::kDiagnostic));
  nlohmann::json encoder_errors = nlohmann::json::array();
  nlohmann::json decoder_errors = nlohmann::json::array();

  for (std::size_t p = 0; p < points; ++p) {
    const std::uint64_t point_seed = mix_seed(seed, p);
    const EncoderParams enc = init_encoder({source.feature_width(), 16, 8}, point_seed);
    const Episode ep = source.episode(p);
    // The Gaussian prior pins the embedding's location. Without it the mean
    // head's output bias is a pure translation with an exactly zero gradient,
    // and the relative error of that coordinate is central-difference noise.
    // A weak prior (1e-3) leaves those gradients near 1e-9, still at the
    // roundoff floor, so use unit precision.
    LossSpec loss;
    loss.prior.mode = PriorMode::kGaussian;
    loss.prior.precision = 1.0;
    Graph g;
    const auto eg = build_episode_graph(g, enc, ep, loss);
    const double err = finite_diff_check(g, eg.loss, eg.params, eps);
    encoder_errors.push_back(err);
    record(r, err, {{"target", "episode-loss"}, {"point_seed", point_seed}, {"episode_index", p},
                    {"eps", eps}});
  }

  for (std::size_t p = 0; p < points; ++p) {
    const std::uint64_t point_seed = mix_seed(seed ^ 0xdec0deULL, p);
    const DecoderParams dec = init_decoder({8, 16, 11, 11, kCellTypes}, point_seed);
    Rng rng(point_seed);
    const std::size_t batch = 2;
    Tensor emb(Shape{batch, 8});
    for (auto& v : emb.data()) v = rng.normal();
    std::vector<double> target;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto t = reconstruction_target(gen_maze(mix_seed(point_seed, b)));
      target.insert(target.end(), t.begin(), t.end());
    }
    Graph g;
    std::vector<NodeId> params;
    const NodeId logits = decode_nodes(g, dec, g.input(std::move(emb)), params);
    const NodeId mse = mse_node(g, logits, Tensor(Shape{batch, dec.config.output_width()}, std::move(target)));
    const double err = finite_diff_check(g, mse, params, eps);
    decoder_errors.push_back(err);
    record(r, err, {{"target", "decoder-loss"}, {"point_seed", point_seed}, {"eps", eps}});
  }
  r.details = {{"episode_loss", encoder_errors}, {"decoder_loss", decoder_errors}};
  finish(r, t0);
  return r;
}

}  // namespace poem
