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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "poem/experiments.hpp"

using namespace poem;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

RunSpec tiny(const std::string& command) {
  RunSpec spec;
  spec.command = command;
  spec.overrides = {"images.families=8",       "images.images_per_family=8", "sampler.ways_max=4",
                    "encoder.hidden=16",        "encoder.embedding=8",        "train.steps=12",
                    "train.eval_every=6",       "train.eval_episodes=30",     "train.diag_views=100",
                    "gridworld.steps=4",        "gridworld.eval_every=2",     "gridworld.eval_episodes=30",
                    "decoder.hidden=16",        "decoder.steps=6",            "decoder.grids_per_step=2",
                    "decoder.eval_every=3",     "decoder.eval_grids=4"};
  return spec;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("poem_exp_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("presets list every command's keys") {
  const auto desk = preset_config("desk");
  const auto paper = preset_config("paper");
  CHECK(desk["sampler"]["crop"] == 6);
  CHECK(paper["sampler"]["crop"] == 14);
  CHECK(paper["images"]["height"] == 84);
  CHECK_NOTHROW(validate_config(desk));
  CHECK_NOTHROW(validate_config(paper));
  CHECK_THROWS_AS(preset_config("huge"), ConfigError);
  CHECK(experiment_commands().size() == 5);
}

TEST_CASE("overrides keep types and reject unknown keys") {
  auto c = preset_config("desk");
  apply_override(c, "train.steps=500");
  CHECK(c["train"]["steps"] == 500);
  apply_override(c, "train.lr=1");
  CHECK(c["train"]["lr"].is_number_float());
  apply_override(c, "prior.mode=gaussian");
  CHECK(c["prior"]["mode"] == "gaussian");
  try {
    apply_override(c, "train.stepz=5");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "train.stepz");
  }
  CHECK_THROWS_AS(apply_override(c, "train.steps=fast"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "train.steps=-3"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "train.steps"), ConfigError);
  CHECK_THROWS_AS(merge_config(c, {{"encoder", {{"depth", 3}}}}), ConfigError);
}

TEST_CASE("validation names the offending key") {
  RunSpec spec = tiny("bench-po");
  spec.overrides.push_back("sampler.support_views=20");
  try {
    resolve_config(spec);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "sampler.support_views");
  }
  spec = tiny("bench-po");
  spec.overrides.push_back("prior.mode=flat");
  CHECK_THROWS_AS(resolve_config(spec), ConfigError);
  spec = tiny("nonsense");
  CHECK_THROWS_AS(resolve_config(spec), ConfigError);
  spec = tiny("bench-po");
  spec.config_file = "/nonexistent/config.json";
  CHECK_THROWS_AS(resolve_config(spec), IoError);
}

TEST_CASE("explicit seed beats the preset") {
  RunSpec spec = tiny("bench-po");
  spec.seed = 42;
  spec.threads = 2;
  const auto c = resolve_config(spec);
  CHECK(c["seed"] == 42);
  CHECK(c["threads"] == 2);
  CHECK(c["command"] == "bench-po");
}

TEST_CASE("eval families are disjoint from training families") {
  const auto c = resolve_config(tiny("bench-po"));
  const auto train = sampler_config(c, false);
  const auto eval = sampler_config(c, true);
  CHECK(eval.pool.family_offset >= train.pool.family_offset + train.pool.families);
}

TEST_CASE("a tiny bench run writes its files and reruns byte for byte") {
  const auto config = resolve_config(tiny("bench-po"));
  const fs::path a = scratch("bench_a"), b = scratch("bench_b");
  const auto summary = run_experiment(config, a);
  CHECK(fs::exists(a / "config.json"));
  CHECK(fs::exists(a / "metrics.jsonl"));
  CHECK(fs::exists(a / "checkpoints" / "poem.ckpt"));
  CHECK(fs::exists(a / "checkpoints" / "protonet.ckpt"));
  const std::string csv = slurp(a / "summary.csv");
  CHECK(csv.rfind("method,accuracy,ci95,precision_ratio\n", 0) == 0);
  CHECK(summary["poem"]["per_episode"].size() == 30);
  CHECK(summary["poem"]["accuracy"].get<double>() >= 0.0);

  // Rerun from the written config.
  RunSpec again;
  again.command = "bench-po";
  again.config_file = a / "config.json";
  run_experiment(resolve_config(again), b);
  CHECK(slurp(b / "summary.csv") == csv);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("svg output and unwritable directories") {
  const auto config = resolve_config(tiny("bench-full"));
  const fs::path dir = scratch("svg");
  run_experiment(config, dir, true);
  CHECK(slurp(dir / "loss.svg").rfind("<svg", 0) == 0);
  CHECK(fs::exists(dir / "accuracy.svg"));
  const fs::path blocker = scratch("blocker");
  { std::ofstream(blocker) << "file"; }
  CHECK_THROWS_AS(run_experiment(config, blocker / "sub"), IoError);
  fs::remove_all(dir);
  fs::remove(blocker);
}

TEST_CASE("gridworld reconstruction end to end") {
  const auto config = resolve_config(tiny("gridworld-recon"));
  const fs::path dir = scratch("recon");
  const auto summary = run_experiment(config, dir);
  CHECK(fs::exists(dir / "reconstruction_example.json"));
  CHECK(fs::exists(dir / "checkpoints" / "encoder.ckpt"));
  const double acc = summary["decoder"]["cell_accuracy"];
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(slurp(dir / "summary.csv").rfind("model,cell_accuracy,all_empty_accuracy,mse\n", 0) == 0);
  fs::remove_all(dir);
}
