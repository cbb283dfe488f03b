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

#include "poem/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "poem/poe_graph.hpp"
#include "poem/rng.hpp"

namespace poem {

std::string to_string(Objective o) {
  switch (o) {
    case Objective::kPoem: return "poem";
    case Objective::kA4: return "a4";
    case Objective::kProtoNet: return "protonet";
  }
  return "?";
}

Objective objective_from_string(const std::string& s) {
  if (s == "poem") return Objective::kPoem;
  if (s == "a4") return Objective::kA4;
  if (s == "protonet") return Objective::kProtoNet;
  throw std::invalid_argument("unknown objective '" + s + "'");
}

std::string to_string(PrecisionMode m) { return m == PrecisionMode::kLearned ? "learned" : "fixed_unit"; }

PrecisionMode precision_mode_from_string(const std::string& s) {
  if (s == "learned") return PrecisionMode::kLearned;
  if (s == "fixed_unit") return PrecisionMode::kFixedUnit;
  throw std::invalid_argument("unknown precision mode '" + s + "'");
}

std::string to_string(PriorMode m) { return m == PriorMode::kNeglect ? "neglect" : "gaussian"; }

PriorMode prior_mode_from_string(const std::string& s) {
  if (s == "neglect") return PriorMode::kNeglect;
  if (s == "gaussian") return PriorMode::kGaussian;
  throw std::invalid_argument("unknown prior mode '" + s + "'");
}

PriorSpec<double> PriorConfig::spec(std::size_t dim) const {
  if (mode == PriorMode::kNeglect) return PriorSpec<double>::neglect();
  return PriorSpec<double>::gaussian(static_cast<Eigen::Index>(dim), mean, precision);
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape(), 0.0);
      v_.emplace_back(p->shape(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* w = params[k]->raw();
    const double* g = grads[k].raw();
    double* m = m_[k].raw();
    double* v = v_[k].raw();
    for (std::size_t i = 0; i < params[k]->size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      w[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

EpisodeGraph build_episode_graph(Graph& g, const EncoderParams& encoder, const Episode& episode,
                                 const LossSpec& loss) {
  const auto vpi = episode.views_per_item();
  const std::size_t support_rows = std::accumulate(vpi.begin(), vpi.end(), std::size_t{0});
  const std::size_t rows = support_rows + episode.queries.size();
  const std::size_t width = encoder.config.input_width;

  Tensor x(Shape{rows, width});
  std::size_t r = 0;
  auto put = [&](const View& v) {
    if (v.patch.size() + v.coords.size() != width)
      throw std::invalid_argument("view width " + std::to_string(v.patch.size() + v.coords.size()) +
                                  " does not match encoder input " + std::to_string(width));
    double* dst = x.raw() + r * width;
    std::copy(v.patch.begin(), v.patch.end(), dst);
    std::copy(v.coords.begin(), v.coords.end(), dst + v.patch.size());
    ++r;
  };
  for (const auto& item : episode.support)
    for (const auto& v : item) put(v);
  for (const auto& v : episode.queries) put(v);

  const PrecisionMode mode = loss.objective == Objective::kPoem ? loss.precision : PrecisionMode::kFixedUnit;
  EncoderNodes enc = encode_nodes(g, encoder, g.input(std::move(x), "views"), mode);

  std::vector<std::size_t> support_idx(support_rows);
  std::iota(support_idx.begin(), support_idx.end(), std::size_t{0});
  std::vector<std::size_t> query_idx(episode.queries.size());
  std::iota(query_idx.begin(), query_idx.end(), support_rows);
  const NodeId s_mean = g.index_select(enc.out.mean, 0, support_idx);
  const NodeId q_mean = g.index_select(enc.out.mean, 0, query_idx);

  NodeId scores;
  switch (loss.objective) {
    case Objective::kPoem: {
      const GaussianNodes support{s_mean, g.index_select(enc.out.precision, 0, support_idx)};
      const GaussianNodes queries{q_mean, g.index_select(enc.out.precision, 0, query_idx)};
      const GaussianNodes items = fuse_support_nodes(g, support, vpi);
      scores = poem_score_nodes(g, items, queries, loss.prior.spec(encoder.config.embedding));
      break;
    }
    case Objective::kA4:
      scores = a4_score_nodes(g, s_mean, q_mean, vpi);
      break;
    case Objective::kProtoNet:
      scores = proto_score_nodes(g, s_mean, q_mean, vpi);
      break;
  }
  return {scores, nll_node(g, scores, episode.targets), std::move(enc.params)};
}

ScoreMatrix<double> score_episode(const EncoderParams& encoder, const Episode& episode, const LossSpec& loss) {
  Graph g;
  const auto eg = build_episode_graph(g, encoder, episode, loss);
  const Tensor& s = g.value(eg.scores);
  ScoreMatrix<double> out;
  out.values.resize(static_cast<Eigen::Index>(s.extent(0)), static_cast<Eigen::Index>(s.extent(1)));
  for (std::size_t n = 0; n < s.extent(0); ++n)
    for (std::size_t m = 0; m < s.extent(1); ++m)
      out.values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = s.at(n, m);
  out.targets = episode.targets;
  return out;
}

double episode_loss(const EncoderParams& encoder, const Episode& episode, const LossSpec& loss) {
  Graph g;
  return g.value(build_episode_graph(g, encoder, episode, loss).loss).item();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"episodes_per_step", c.episodes_per_step},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"seed", c.seed},
          {"objective", to_string(c.loss.objective)},
          {"precision_mode", to_string(c.loss.precision)},
          {"prior_mode", to_string(c.loss.prior.mode)},
          {"prior_mean", c.loss.prior.mean},
          {"prior_precision", c.loss.prior.precision},
          {"eval_every", c.eval_every},
          {"eval_episodes", c.eval_episodes},
          {"diag_views", c.diag_views}};
}

RunRecord train_fewshot(EncoderParams& encoder, const EpisodeSource& train, const TrainConfig& config,
                        const EpisodeSource* eval, const MetricsSink& sink) {
  if (config.steps == 0 || config.episodes_per_step == 0) throw std::invalid_argument("step counts must be positive");
  if (!(config.adam.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (train.feature_width() != encoder.config.input_width)
    throw std::invalid_argument("sampler feature width does not match encoder input width");

  const auto t0 = std::chrono::steady_clock::now();
  RunRecord record;
  record.config = to_json(config);
  Adam adam(config.adam);
  const auto tensors = encoder.tensors();
  const bool diag = config.diag_views > 0 && config.loss.objective == Objective::kPoem &&
                    config.loss.precision == PrecisionMode::kLearned;

  auto run_eval = [&](std::size_t step) {
    if (!eval) return;
    record.final_episode_accuracies =
        episode_accuracies(encoder, *eval, config.eval_episodes, config.loss, config.threads);
    const Accuracy acc = summarize_accuracy(record.final_episode_accuracies);
    EvalRecord e{step, acc.mean, acc.ci95, 0.0};
    if (diag) e.precision_ratio = precision_variance_ratio(encoder, *eval, config.diag_views);
    record.evals.push_back(e);
    if (sink)
      sink({{"event", "eval"},
            {"step", step},
            {"accuracy", e.accuracy},
            {"ci95", e.ci95},
            {"precision_ratio", e.precision_ratio}});
  };

  std::vector<Tensor> grad_sum;
  for (std::size_t step = 0; step < config.steps; ++step) {
    double loss_sum = 0.0;
    grad_sum.clear();
    for (std::size_t e = 0; e < config.episodes_per_step; ++e) {
      const std::uint64_t index = step * config.episodes_per_step + e;
      const Episode ep = train.episode(index);
      Graph g;
      std::vector<Tensor> grads;
      double loss = 0.0;
      try {
        const auto eg = build_episode_graph(g, encoder, ep, config.loss);
        loss = g.value(eg.loss).item();
        grads = gradient(g, eg.loss, eg.params);
      } catch (const GraphError& err) {
        throw TrainingAborted("non-finite value at step " + std::to_string(step) + ": " + err.what(), step, index,
                              ep.meta.seed);
      }
      loss_sum += loss;
      if (grad_sum.empty()) {
        grad_sum = std::move(grads);
      } else {
        for (std::size_t k = 0; k < grads.size(); ++k)
          for (std::size_t i = 0; i < grads[k].size(); ++i) grad_sum[k][i] += grads[k][i];
      }
    }
    if (config.episodes_per_step > 1) {
      const double inv = 1.0 / static_cast<double>(config.episodes_per_step);
      for (auto& gk : grad_sum)
        for (auto& v : gk.data()) v *= inv;
    }
    const double loss = loss_sum / static_cast<double>(config.episodes_per_step);
    adam.step(tensors, grad_sum);
    record.losses.push_back(loss);
    if (sink) sink({{"event", "step"}, {"step", step}, {"loss", loss}});
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && step + 1 < config.steps) run_eval(step + 1);
  }
  run_eval(config.steps);
  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

Accuracy summarize_accuracy(std::span<const double> per_episode) {
  Accuracy out;
  const auto n = static_cast<double>(per_episode.size());
  if (per_episode.empty()) return out;
  out.mean = std::accumulate(per_episode.begin(), per_episode.end(), 0.0) / n;
  if (per_episode.size() < 2) return out;
  double ss = 0.0;
  for (double a : per_episode) ss += (a - out.mean) * (a - out.mean);
  out.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

std::vector<double> episode_accuracies(const EncoderParams& encoder, const EpisodeSource& source, std::size_t n,
                                       const LossSpec& loss, std::size_t threads) {
  if (n < 30) throw std::invalid_argument("evaluation needs at least 30 episodes");
  std::vector<double> acc(n, 0.0);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n; i += stride) acc[i] = accuracy(score_episode(encoder, source.episode(i), loss));
  };
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  return acc;
}

Accuracy evaluate_accuracy(const EncoderParams& encoder, const EpisodeSource& source, std::size_t n,
                           const LossSpec& loss, std::size_t threads) {
  const auto acc = episode_accuracies(encoder, source, n, loss, threads);
  return summarize_accuracy(acc);
}

double variance_ratio(std::span<const DiagGaussian<double>> encoded) {
  double n = 0.0;
  double sum_mu = 0.0;
  double sum_tau = 0.0;
  for (const auto& e : encoded) {
    sum_mu += e.mean.sum();
    sum_tau += e.precision.sum();
    n += static_cast<double>(e.dim());
  }
  if (n < 2.0) throw std::invalid_argument("variance_ratio: not enough entries");
  const double mean_mu = sum_mu / n;
  const double mean_tau = sum_tau / n;
  double var_mu = 0.0;
  double var_tau = 0.0;
  for (const auto& e : encoded) {
    var_mu += (e.mean.array() - mean_mu).square().sum();
    var_tau += (e.precision.array() - mean_tau).square().sum();
  }
  var_mu /= n;
  var_tau /= n;
  if (var_mu < 1e-12) throw std::domain_error("degenerate encoder: mean variance below 1e-12");
  return var_tau / var_mu;
}

double precision_variance_ratio(const EncoderParams& encoder, const EpisodeSource& source, std::size_t n_views,
                                PrecisionMode mode) {
  if (n_views < 100) throw std::invalid_argument("precision_variance_ratio needs at least 100 views");
  std::vector<std::vector<double>> features;
  for (std::uint64_t i = 0; features.size() < n_views; ++i) {
    const Episode ep = source.episode(i);
    for (const auto& item : ep.support)
      for (const auto& v : item)
        if (features.size() < n_views) features.push_back(v.features());
    for (const auto& v : ep.queries)
      if (features.size() < n_views) features.push_back(v.features());
  }
  const auto encoded = encode(encoder, features, mode);
  return variance_ratio(encoded);
}

nlohmann::json to_json(const DecoderTrainConfig& c) {
  return {{"steps", c.steps},
          {"grids_per_step", c.grids_per_step},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"seed", c.seed},
          {"size", c.size},
          {"eval_every", c.eval_every},
          {"eval_grids", c.eval_grids},
          {"precision_mode", to_string(c.precision)}};
}

Eigen::VectorXd environment_embedding(const EncoderParams& encoder, const Grid& grid, PrecisionMode mode) {
  std::vector<std::vector<double>> features;
  for (const auto& v : support_views(grid)) features.push_back(v.features());
  const auto encoded = encode(encoder, features, mode);
  return gaussian_product(encoded).product.mean;
}

std::uint64_t decoder_train_grid_seed(std::uint64_t seed, std::size_t index) {
  return mix_seed(stream_seed(seed, Stream::kDecoderTrain), index);
}

std::uint64_t decoder_test_grid_seed(std::uint64_t seed, std::size_t index) {
  return mix_seed(stream_seed(seed, Stream::kDecoderTest), index);
}

ReconstructionScore evaluate_decoder(const DecoderParams& decoder, const EncoderParams& encoder, PrecisionMode mode,
                                     std::uint64_t seed, std::size_t grids, int size) {
  ReconstructionScore s;
  for (std::size_t i = 0; i < grids; ++i) {
    const Grid grid = gen_maze(decoder_test_grid_seed(seed, i), size);
    const auto logits = decode(decoder, environment_embedding(encoder, grid, mode));
    const auto target = reconstruction_target(grid);
    double se = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) se += (logits[k] - target[k]) * (logits[k] - target[k]);
    s.mse += se / static_cast<double>(logits.size());
    s.cell_accuracy += cell_accuracy(logits, grid);
    s.all_empty_accuracy += all_empty_accuracy(grid);
  }
  const double n = static_cast<double>(grids);
  s.mse /= n;
  s.cell_accuracy /= n;
  s.all_empty_accuracy /= n;
  return s;
}

RunRecord train_decoder(DecoderParams& decoder, const EncoderParams& encoder, const DecoderTrainConfig& config,
                        const MetricsSink& sink) {
  if (config.steps == 0 || config.grids_per_step == 0) throw std::invalid_argument("step counts must be positive");
  if (decoder.config.embedding != encoder.config.embedding)
    throw std::invalid_argument("decoder input width does not match encoder embedding");
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord record;
  record.config = to_json(config);
  Adam adam(config.adam);
  const auto tensors = decoder.tensors();
  const std::size_t d = encoder.config.embedding;
  const std::size_t out_width = decoder.config.output_width();

  auto run_eval = [&](std::size_t step) {
    const auto score = evaluate_decoder(decoder, encoder, config.precision, config.seed, config.eval_grids, config.size);
    record.evals.push_back({step, score.cell_accuracy, 0.0, score.all_empty_accuracy});
    if (sink)
      sink({{"event", "eval"},
            {"step", step},
            {"cell_accuracy", score.cell_accuracy},
            {"all_empty_accuracy", score.all_empty_accuracy},
            {"mse", score.mse}});
  };

  for (std::size_t step = 0; step < config.steps; ++step) {
    const std::size_t b = config.grids_per_step;
    Tensor emb(Shape{b, d});
    Tensor target(Shape{b, out_width});
    for (std::size_t k = 0; k < b; ++k) {
      const Grid grid = gen_maze(decoder_train_grid_seed(config.seed, step * b + k), config.size);
      const Eigen::VectorXd e = environment_embedding(encoder, grid, config.precision);
      std::copy(e.data(), e.data() + e.size(), emb.raw() + k * d);
      const auto t = reconstruction_target(grid);
      std::copy(t.begin(), t.end(), target.raw() + k * out_width);
    }
    Graph g;
    std::vector<NodeId> params;
    const NodeId logits = decode_nodes(g, decoder, g.input(std::move(emb)), params);
    NodeId loss_node;
    double loss = 0.0;
    try {
      loss_node = mse_node(g, logits, std::move(target));
      loss = g.value(loss_node).item();
    } catch (const GraphError& err) {
      throw TrainingAborted(std::string("non-finite decoder loss: ") + err.what(), step, step, config.seed);
    }
    adam.step(tensors, gradient(g, loss_node, params));
    record.losses.push_back(loss);
    if (sink) sink({{"event", "step"}, {"step", step}, {"mse", loss}});
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && step + 1 < config.steps) run_eval(step + 1);
  }
  run_eval(config.steps);
  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

}  // namespace poem
