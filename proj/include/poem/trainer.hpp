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

// Episodic training, evaluation and diagnostics.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "poem/episodes.hpp"
#include "poem/gridworld.hpp"
#include "poem/models.hpp"

namespace poem {

enum class Objective {
  kPoem,      // product-of-experts scores
  kA4,        // closed-form unit-precision scores
  kProtoNet,  // negative squared distance to the class mean
};

std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);
std::string to_string(PrecisionMode m);
PrecisionMode precision_mode_from_string(const std::string& s);
std::string to_string(PriorMode m);
PriorMode prior_mode_from_string(const std::string& s);

struct PriorConfig {
  PriorMode mode = PriorMode::kNeglect;
  double mean = 0.0;
  double precision = kDefaultPriorPrecision;

  PriorSpec<double> spec(std::size_t dim) const;
};

struct LossSpec {
  Objective objective = Objective::kPoem;
  PrecisionMode precision = PrecisionMode::kLearned;
  PriorConfig prior;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

struct EpisodeGraph {
  NodeId scores;  // [N, M]
  NodeId loss;    // scalar
  std::vector<NodeId> params;
};

/// Encodes every view of `episode` in one batch, fuses, scores and takes the NLL.
EpisodeGraph build_episode_graph(Graph& g, const EncoderParams& encoder, const Episode& episode, const LossSpec& loss);

ScoreMatrix<double> score_episode(const EncoderParams& encoder, const Episode& episode, const LossSpec& loss);

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t episodes_per_step = 1;
  AdamConfig adam;
  std::uint64_t seed = 1;
  LossSpec loss;
  std::size_t eval_every = 0;  // 0 disables periodic evaluation
  std::size_t eval_episodes = 300;
  std::size_t diag_views = 0;  // views for the precision ratio at each evaluation; 0 skips it
  std::size_t threads = 1;     // evaluation workers
};

struct EvalRecord {
  std::size_t step = 0;
  double accuracy = 0.0;
  double ci95 = 0.0;
  double precision_ratio = 0.0;
};

struct RunRecord {
  nlohmann::json config;
  std::vector<double> losses;
  std::vector<EvalRecord> evals;
  std::vector<double> final_episode_accuracies;  // per episode, from the last evaluation
  double wall_seconds = 0.0;
  std::string checkpoint;
};

/// Raised when a step produces a non-finite loss; carries what is needed to replay it.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::size_t step, std::uint64_t episode_index, std::uint64_t episode_seed)
      : std::runtime_error(what), step_(step), episode_index_(episode_index), episode_seed_(episode_seed) {}
  std::size_t step() const { return step_; }
  std::uint64_t episode_index() const { return episode_index_; }
  std::uint64_t episode_seed() const { return episode_seed_; }

 private:
  std::size_t step_;
  std::uint64_t episode_index_;
  std::uint64_t episode_seed_;
};

/// Receives one JSON object per step/eval event.
using MetricsSink = std::function<void(const nlohmann::json&)>;

nlohmann::json to_json(const TrainConfig& c);

/// Loss of one episode under the current parameters (used for replay).
double episode_loss(const EncoderParams& encoder, const Episode& episode, const LossSpec& loss);

RunRecord train_fewshot(EncoderParams& encoder, const EpisodeSource& train, const TrainConfig& config,
                        const EpisodeSource* eval = nullptr, const MetricsSink& sink = {});

struct Accuracy {
  double mean = 0.0;
  double ci95 = 0.0;
};

/// Mean and 1.96 * sample std / sqrt(n).
Accuracy summarize_accuracy(std::span<const double> per_episode);

/// Per-episode accuracies on episodes 0..n-1 of `source` (n >= 30).
std::vector<double> episode_accuracies(const EncoderParams& encoder, const EpisodeSource& source, std::size_t n,
                                       const LossSpec& loss, std::size_t threads = 1);

Accuracy evaluate_accuracy(const EncoderParams& encoder, const EpisodeSource& source, std::size_t n,
                           const LossSpec& loss, std::size_t threads = 1);

/// Var[tau] / Var[mu] over every (view, dimension) entry.
double variance_ratio(std::span<const DiagGaussian<double>> encoded);

/// Encodes the first n_views views (support then queries) of successive episodes.
double precision_variance_ratio(const EncoderParams& encoder, const EpisodeSource& source, std::size_t n_views,
                                PrecisionMode mode = PrecisionMode::kLearned);

struct DecoderTrainConfig {
  std::size_t steps = 1500;
  std::size_t grids_per_step = 8;
  AdamConfig adam;
  std::uint64_t seed = 1;
  int size = 11;
  std::size_t eval_every = 500;
  std::size_t eval_grids = 50;
  PrecisionMode precision = PrecisionMode::kLearned;
};

nlohmann::json to_json(const DecoderTrainConfig& c);

/// Fused views-only product mean of a maze's optimal-trajectory observations.
Eigen::VectorXd environment_embedding(const EncoderParams& encoder, const Grid& grid, PrecisionMode mode);

std::uint64_t decoder_train_grid_seed(std::uint64_t seed, std::size_t index);
std::uint64_t decoder_test_grid_seed(std::uint64_t seed, std::size_t index);

struct ReconstructionScore {
  double cell_accuracy = 0.0;
  double all_empty_accuracy = 0.0;
  double mse = 0.0;
};

/// Averages over `grids` held-out mazes.
ReconstructionScore evaluate_decoder(const DecoderParams& decoder, const EncoderParams& encoder, PrecisionMode mode,
                                     std::uint64_t seed, std::size_t grids, int size = 11);

/// Frozen `encoder`; records per-step MSE and held-out cell accuracy in `evals`.
RunRecord train_decoder(DecoderParams& decoder, const EncoderParams& encoder, const DecoderTrainConfig& config,
                        const MetricsSink& sink = {});

}  // namespace poem
