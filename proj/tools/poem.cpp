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

// poem selftest [--inject-fault log-s-sign] [--seed N]
// poem run <command> [key=value ...] [--preset desk|paper] [--config FILE]
//          [--seed N] [--threads N] [--out DIR] [--emit-svg]
//
// Exit codes: 0 ok, 1 selftest or training failure, 2 config error, 3 IO error.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "poem/experiments.hpp"
#include "poem/oracles.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kIoError = 3;

int selftest(std::uint64_t seed, const std::string& fault) {
  using namespace poem;
  ProductFn product = default_product();
  if (fault == "log-s-sign") {
    product = faulty_product();
  } else if (!fault.empty()) {
    std::cerr << "unknown fault '" << fault << "' (known: log-s-sign)\n";
    return kConfigError;
  }

  std::vector<SuiteResult> results;
  results.push_back(gaussian_product_suite(mix_seed(seed, 1), 200, 1e-6, product));
  results.push_back(predictive_suite(mix_seed(seed, 2)));
  results.push_back(invariant_suite(mix_seed(seed, 3), 1000, 1e-10, product));
  results.push_back(a4_suite(mix_seed(seed, 4)));
  results.push_back(gradient_suite(mix_seed(seed, 5)));

  std::printf("%-20s %7s %8s %12s %10s %8s  %s\n", "suite", "cases", "failures", "worst", "tolerance", "seconds",
              "result");
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-20s %7zu %8zu %12.3e %10.1e %8.2f  %s\n", r.name.c_str(), r.cases, r.failures, r.worst,
                r.tolerance, r.seconds, r.passed() ? "PASS" : "FAIL");
    ok = ok && r.passed();
  }
  for (const auto& r : results) {
    if (r.passed()) continue;
    std::printf("\nFAILED %s; first failing case (replay with --seed %llu):\n%s\n", r.name.c_str(),
                static_cast<unsigned long long>(seed), r.first_failure.dump(2).c_str());
  }
  return ok ? kOk : kFailure;
}

int run(const poem::RunSpec& spec_in) {
  poem::RunSpec spec = spec_in;
  const nlohmann::json config = poem::resolve_config(spec);
  if (spec.out_dir.empty())
    spec.out_dir = "runs/" + spec.command + "-seed" + std::to_string(config.at("seed").get<std::uint64_t>());
  std::cerr << "[" << spec.command << "] writing to " << spec.out_dir.string() << '\n';
  const auto summary = poem::run_experiment(config, spec.out_dir, spec.emit_svg, &std::cerr);
  std::ifstream csv(spec.out_dir / "summary.csv");
  std::cout << csv.rdbuf();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"POEM: product-of-experts few-shot learning from partial views"};
  app.require_subcommand(1);

  auto* st = app.add_subcommand("selftest", "run every oracle suite and print a pass/fail table");
  std::uint64_t st_seed = 20240601;
  std::string fault;
  st->add_option("--seed", st_seed, "seed for the randomised suites");
  st->add_option("--inject-fault", fault, "mutation fixture: log-s-sign");

  auto* rn = app.add_subcommand("run", "run an experiment into an output directory");
  poem::RunSpec spec;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string config_file;
  std::string out_dir;
  rn->add_option("command", spec.command, "bench-po | bench-full | gridworld-train | gridworld-recon | diag")
      ->required();
  rn->add_option("overrides", spec.overrides, "key=value config overrides, e.g. train.steps=500");
  rn->add_option("--preset", spec.preset, "desk (default) or paper");
  rn->add_option("--config", config_file, "JSON config file (any subset of keys)");
  auto* seed_opt = rn->add_option("--seed", seed, "master seed");
  auto* threads_opt = rn->add_option("--threads", threads, "evaluation workers (1 keeps runs bit-reproducible)");
  rn->add_option("--out", out_dir, "output directory (default runs/<command>-seed<seed>)");
  rn->add_flag("--emit-svg", spec.emit_svg, "also write loss.svg and accuracy.svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*st) return selftest(st_seed, fault);
    if (!config_file.empty()) spec.config_file = config_file;
    if (*seed_opt) spec.seed = seed;
    if (*threads_opt) spec.threads = threads;
    spec.out_dir = out_dir;
    return run(spec);
  } catch (const poem::ConfigError& e) {
    std::cerr << "config error [" << e.key() << "]: " << e.what() << '\n';
    return kConfigError;
  } catch (const poem::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIoError;
  } catch (const poem::TrainingAborted& e) {
    std::cerr << "training aborted at step " << e.step() << " (episode index " << e.episode_index() << ", seed "
              << e.episode_seed() << "): " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
