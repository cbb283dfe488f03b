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
#include <limits>

#include "poem/trainer.hpp"

using namespace poem;

namespace {

SamplerConfig tiny_sampler() {
  SamplerConfig cfg = SamplerConfig::desk();
  cfg.pool.families = 8;
  cfg.pool.images_per_family = 8;
  cfg.ways_max = 4;
  return cfg;
}

EncoderParams tiny_encoder(const EpisodeSource& src, std::uint64_t seed = 7) {
  return init_encoder({src.feature_width(), 16, 8}, seed);
}

// Wraps a source and poisons one episode with a NaN pixel.
class PoisonedSource final : public EpisodeSource {
 public:
  PoisonedSource(const EpisodeSource& inner, std::uint64_t bad) : inner_(inner), bad_(bad) {}
  Episode episode(std::uint64_t index) const override {
    Episode ep = inner_.episode(index);
    if (index == bad_) ep.support[0][0].patch[0] = std::numeric_limits<double>::quiet_NaN();
    return ep;
  }
  std::size_t feature_width() const override { return inner_.feature_width(); }

 private:
  const EpisodeSource& inner_;
  std::uint64_t bad_;
};

}  // namespace

TEST_CASE("enum names round-trip") {
  for (auto o : {Objective::kPoem, Objective::kA4, Objective::kProtoNet})
    CHECK(objective_from_string(to_string(o)) == o);
  for (auto m : {PrecisionMode::kLearned, PrecisionMode::kFixedUnit})
    CHECK(precision_mode_from_string(to_string(m)) == m);
  for (auto m : {PriorMode::kNeglect, PriorMode::kGaussian}) CHECK(prior_mode_from_string(to_string(m)) == m);
  CHECK_THROWS(objective_from_string("maml"));
}

TEST_CASE("fixed-unit POEM loss equals the closed-form loss") {
  const ImageEpisodeSource src(tiny_sampler(), Condition::kPartial, 3);
  const EncoderParams enc = tiny_encoder(src);
  for (std::uint64_t i = 0; i < 10; ++i) {
    const Episode ep = src.episode(i);
    const double poem = episode_loss(enc, ep, {Objective::kPoem, PrecisionMode::kFixedUnit, {}});
    const double a4 = episode_loss(enc, ep, {Objective::kA4, PrecisionMode::kLearned, {}});
    CHECK(std::abs(poem - a4) < 1e-9);
  }
}

TEST_CASE("graph scores match the closed-form scorer on encoded views") {
  const ImageEpisodeSource src(tiny_sampler(), Condition::kPartial, 5);
  const EncoderParams enc = tiny_encoder(src);
  const Episode ep = src.episode(0);
  const LossSpec loss{Objective::kPoem, PrecisionMode::kLearned, {PriorMode::kGaussian, 0.0, 0.01}};
  const auto scores = score_episode(enc, ep, loss);
  std::vector<std::vector<DiagGaussian<double>>> support;
  for (const auto& item : ep.support) {
    std::vector<std::vector<double>> rows;
    for (const auto& v : item) rows.push_back(v.features());
    support.push_back(encode(enc, rows));
  }
  std::vector<std::vector<double>> qrows;
  for (const auto& v : ep.queries) qrows.push_back(v.features());
  const auto exact = episode_scores(support, encode(enc, qrows), loss.prior.spec(8), ep.targets);
  CHECK((scores.values - exact.values).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("a one-way episode has zero loss") {
  SamplerConfig cfg = tiny_sampler();
  cfg.ways_min = cfg.ways_max = 1;
  const ImageEpisodeSource src(cfg, Condition::kPartial, 1);
  const EncoderParams enc = tiny_encoder(src);
  CHECK(episode_loss(enc, src.episode(0), {}) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("Adam's first step has size lr and it minimizes a quadratic") {
  Tensor w = Tensor::vector({5.0, -3.0});
  Adam adam({0.1, 0.9, 0.999, 1e-8});
  std::vector<Tensor*> params{&w};
  adam.step(params, std::vector<Tensor>{Tensor::vector({10.0, -0.01})});
  CHECK(w[0] == doctest::Approx(4.9).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(-2.9).epsilon(1e-5));
  for (int i = 0; i < 500; ++i) adam.step(params, std::vector<Tensor>{Tensor::vector({2 * w[0], 2 * w[1]})});
  CHECK(std::abs(w[0]) < 0.05);
  CHECK(std::abs(w[1]) < 0.05);
  CHECK(adam.steps() == 501);
}

TEST_CASE("confidence interval by hand") {
  const std::vector<double> xs{0.0, 1.0};
  const Accuracy a = summarize_accuracy(xs);
  CHECK(a.mean == 0.5);
  CHECK(a.ci95 == doctest::Approx(1.96 * std::sqrt(0.5) / std::sqrt(2.0)));
  const std::vector<double> same(40, 0.7);
  CHECK(summarize_accuracy(same).ci95 < 1e-12);
}

TEST_CASE("variance ratio scales with the square of a precision scale") {
  Rng rng(9);
  std::vector<DiagGaussian<double>> gs;
  for (int i = 0; i < 50; ++i)
    gs.push_back(DiagGaussian<double>(Vec<double>::Random(3), (Vec<double>::Random(3).array() + 2.0).matrix()));
  const double base = variance_ratio(gs);
  for (auto& g : gs) g.precision *= 3.0;
  CHECK(variance_ratio(gs) == doctest::Approx(9.0 * base).epsilon(1e-12));
  for (auto& g : gs) g.mean.setConstant(1.0);
  CHECK_THROWS_AS(variance_ratio(gs), std::domain_error);
}

TEST_CASE("training is deterministic and learns") {
  const ImageEpisodeSource train(tiny_sampler(), Condition::kPartial, 11);
  SamplerConfig eval_cfg = tiny_sampler();
  eval_cfg.pool.family_offset = 8;
  const ImageEpisodeSource eval(eval_cfg, Condition::kPartial, 12);
  TrainConfig cfg;
  cfg.steps = 60;
  cfg.adam.lr = 3e-3;
  cfg.eval_episodes = 30;
  cfg.eval_every = 30;
  cfg.diag_views = 100;
  std::size_t events = 0;
  EncoderParams a = tiny_encoder(train);
  const RunRecord ra = train_fewshot(a, train, cfg, &eval, [&](const nlohmann::json&) { ++events; });
  EncoderParams b = tiny_encoder(train);
  const RunRecord rb = train_fewshot(b, train, cfg, &eval);
  CHECK(ra.losses == rb.losses);
  CHECK(ra.final_episode_accuracies == rb.final_episode_accuracies);
  REQUIRE(ra.evals.size() == 2);
  CHECK(ra.evals[1].step == 60);
  CHECK(ra.evals[1].precision_ratio > 0.0);
  CHECK(events == 62);
  double early = 0, late = 0;
  for (int i = 0; i < 15; ++i) {
    early += ra.losses[static_cast<std::size_t>(i)];
    late += ra.losses[ra.losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(late < early);
  // Threads change nothing but the schedule.
  CHECK(episode_accuracies(a, eval, 30, cfg.loss, 3) == episode_accuracies(a, eval, 30, cfg.loss, 1));
  CHECK_THROWS(episode_accuracies(a, eval, 10, cfg.loss));
}

TEST_CASE("a non-finite loss aborts with the step and episode to replay") {
  const ImageEpisodeSource inner(tiny_sampler(), Condition::kPartial, 2);
  const PoisonedSource src(inner, 4);
  EncoderParams enc = tiny_encoder(src);
  TrainConfig cfg;
  cfg.steps = 10;
  try {
    train_fewshot(enc, src, cfg);
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(e.step() == 4);
    CHECK(e.episode_index() == 4);
    CHECK(e.episode_seed() == inner.episode(4).meta.seed);
  }
}

TEST_CASE("decoder training lowers reconstruction error") {
  const EncoderParams enc = init_encoder({kObservationWidth, 16, 8}, 3);
  DecoderParams dec = init_decoder({8, 32, 11, 11, 4}, 4);
  DecoderTrainConfig cfg;
  cfg.steps = 60;
  cfg.grids_per_step = 4;
  cfg.eval_every = 0;
  cfg.eval_grids = 5;
  const RunRecord r = train_decoder(dec, enc, cfg);
  REQUIRE(r.losses.size() == 60);
  CHECK(r.losses.back() < r.losses.front());
  const auto score = evaluate_decoder(dec, enc, PrecisionMode::kLearned, 5, 5);
  CHECK(score.cell_accuracy >= 0.0);
  CHECK(score.cell_accuracy <= 1.0);
  CHECK(score.all_empty_accuracy > 0.3);
  CHECK(score.all_empty_accuracy < 0.9);
  CHECK(decoder_train_grid_seed(1, 0) != decoder_test_grid_seed(1, 0));
  CHECK(environment_embedding(enc, gen_maze(1), PrecisionMode::kLearned).size() == 8);
}
