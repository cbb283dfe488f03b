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


// Acceptance runner: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   acceptance [--out DIR] [--seeds N] [--threads N]
//
// Criteria 1-5 run the oracle suites. 6-11 train the desk preset through the
// same code path as `poem run` and write every run directory under DIR.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "poem/experiments.hpp"
#include "poem/oracles.hpp"
#include "poem/rng.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kOracleSeed = 20240601;

struct Line {
  int id;
  bool pass;
  std::string what;
  std::string observed;
};

std::vector<Line> g_lines;
json g_report = json::object();

void report(int id, bool pass, const std::string& what, const std::string& observed) {
  g_lines.push_back({id, pass, what, observed});
  std::printf("criterion %2d: %s  %s | %s\n", id, pass ? "PASS" : "FAIL", what.c_str(), observed.c_str());
  std::fflush(stdout);
  g_report[std::to_string(id)] = {{"pass", pass}, {"criterion", what}, {"observed", observed}};
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

void suite_line(int id, const poem::SuiteResult& r, const std::string& what, bool extra_ok = true,
                const std::string& extra = "") {
  std::string obs = std::to_string(r.cases) + " cases, " + std::to_string(r.failures) + " failures, worst " +
                    fmt("%.3e", r.worst) + ", " + fmt("%.2f s", r.seconds) + extra;
  report(id, r.passed() && extra_ok, what, obs);
  g_report[std::to_string(id)]["details"] = r.details;
  if (!r.passed()) g_report[std::to_string(id)]["first_failure"] = r.first_failure;
}

json run(const std::string& command, std::uint64_t seed, std::size_t threads, const std::vector<std::string>& overrides,
         const fs::path& dir) {
  poem::RunSpec spec;
  spec.command = command;
  spec.seed = seed;
  spec.threads = threads;
  spec.overrides = overrides;
  const json config = poem::resolve_config(spec);
  std::cerr << "[acceptance] " << command << " seed " << seed << " -> " << dir.string() << '\n';
  return poem::run_experiment(config, dir, false, &std::cerr);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

bool overlap(const json& a, const json& b) {
  const double lo_a = a["accuracy"].get<double>() - a["ci95"].get<double>();
  const double hi_a = a["accuracy"].get<double>() + a["ci95"].get<double>();
  const double lo_b = b["accuracy"].get<double>() - b["ci95"].get<double>();
  const double hi_b = b["accuracy"].get<double>() + b["ci95"].get<double>();
  return lo_a <= hi_b && lo_b <= hi_a;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"POEM acceptance criteria"};
  std::string out = "acceptance_runs";
  std::size_t seeds = 3;
  std::size_t threads = 1;
  app.add_option("--out", out, "directory for run outputs and acceptance_report.json");
  app.add_option("--seeds", seeds, "seeds for the benchmark criteria")->check(CLI::Range(1, 10));
  app.add_option("--threads", threads, "evaluation workers for the training criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path root(out);
  fs::create_directories(root);

  try {
    // 1-5: exact oracles.
    const auto product = poem::gaussian_product_suite(poem::mix_seed(kOracleSeed, 1), 200, 1e-6);
    suite_line(1, product, "Gaussian product vs quadrature, 200 sets, rel 1e-6, < 10 s", product.seconds < 10.0);
    suite_line(2, poem::predictive_suite(poem::mix_seed(kOracleSeed, 2), 100, 1e-5),
               "predictive ratio vs quadrature, 100 episodes x 2 prior modes, rel 1e-5");
    suite_line(3, poem::invariant_suite(poem::mix_seed(kOracleSeed, 3), 1000, 1e-10),
               "associativity / permutation / precision additivity, 1000 instances, 1e-10");
    suite_line(4, poem::a4_suite(poem::mix_seed(kOracleSeed, 4), 100, 1e-9),
               "unit-precision closed form 1e-9 (unequal V), argmax = ProtoNet (equal V), 100 episodes each");
    suite_line(5, poem::gradient_suite(poem::mix_seed(kOracleSeed, 5), 3, 1e-4),
               "finite differences on episode loss and decoder loss, 3 points each, rel < 1e-4");

    // 6-8: image benchmarks in both conditions.
    const auto t_bench = std::chrono::steady_clock::now();
    std::vector<json> partial, full;
    for (std::uint64_t s = 1; s <= seeds; ++s) {
      partial.push_back(run("bench-po", s, threads, {}, root / ("bench-po-seed" + std::to_string(s))));
      full.push_back(run("bench-full", s, threads, {}, root / ("bench-full-seed" + std::to_string(s))));
    }
    const double bench_minutes = seconds_since(t_bench) / 60.0;
    g_report["bench_minutes"] = bench_minutes;

    auto gaps = [](const std::vector<json>& runs, double& mean_gap, std::size_t& separated, std::size_t& overlapping,
                   std::string& per_seed) {
      mean_gap = 0.0;
      separated = overlapping = 0;
      for (const auto& r : runs) {
        const double gap = 100.0 * (r["poem"]["accuracy"].get<double>() - r["protonet"]["accuracy"].get<double>());
        mean_gap += gap / static_cast<double>(runs.size());
        const bool ov = overlap(r["poem"], r["protonet"]);
        overlapping += ov ? 1 : 0;
        separated += (!ov && gap > 0.0) ? 1 : 0;
        per_seed += fmt(" [%.1f+-%.1f vs %.1f+-%.1f]", 100.0 * r["poem"]["accuracy"].get<double>(),
                        100.0 * r["poem"]["ci95"].get<double>(), 100.0 * r["protonet"]["accuracy"].get<double>(),
                        100.0 * r["protonet"]["ci95"].get<double>());
      }
    };
    const std::size_t need = (2 * seeds + 2) / 3;  // 2 of 3
    {
      double gap;
      std::size_t sep, ov;
      std::string per_seed;
      gaps(partial, gap, sep, ov, per_seed);
      report(6, gap >= 3.0 && sep >= need && bench_minutes < 30.0,
             "partial views: POEM - ProtoNet >= 3 points, CIs separated in >= 2/3 seeds, < 30 min",
             fmt("mean gap %.2f points, separated in %.0f/%.0f seeds,", gap, static_cast<double>(sep),
                 static_cast<double>(seeds)) +
                 per_seed + fmt(", both conditions %.1f min on this machine", bench_minutes));
    }
    {
      double gap;
      std::size_t sep, ov;
      std::string per_seed;
      gaps(full, gap, sep, ov, per_seed);
      report(7, std::abs(gap) <= 2.0 && ov >= need, "full views: |POEM - ProtoNet| <= 2 points, CIs overlap in >= 2/3",
             fmt("mean gap %.2f points, overlapping in %.0f/%.0f seeds,", gap, static_cast<double>(ov),
                 static_cast<double>(seeds)) +
                 per_seed);
    }
    {
      double rp = 0.0, rf = 0.0;
      std::string per_seed;
      for (std::size_t i = 0; i < seeds; ++i) {
        const double p = partial[i]["poem"]["precision_ratio"].get<double>();
        const double f = full[i]["poem"]["precision_ratio"].get<double>();
        rp += p / static_cast<double>(seeds);
        rf += f / static_cast<double>(seeds);
        per_seed += fmt(" [%.3g / %.3g]", p, f);
      }
      const double q = rf > 0.0 ? rp / rf : INFINITY;
      report(8, q >= 10.0, "Var[tau]/Var[mu]: partial model >= 10x full model (seed means)",
             fmt("partial %.4g, full %.4g, quotient %.2f; per seed", rp, rf, q) + per_seed);
    }

    // 9-10: gridworld.
    const fs::path grid_dir = root / "gridworld-train-seed1";
    const auto t_grid = std::chrono::steady_clock::now();
    const json grid = run("gridworld-train", 1, threads, {}, grid_dir);
    const double grid_minutes = seconds_since(t_grid) / 60.0;
    {
      const double gap =
          100.0 * (grid["poem"]["accuracy"].get<double>() - grid["protonet"]["accuracy"].get<double>());
      report(9, gap >= 3.0 && grid_minutes < 20.0, "gridworld recognition, M=5, 100 test episodes: POEM - ProtoNet >= 3 points, < 20 min",
             fmt("POEM %.1f+-%.1f, ProtoNet %.1f+-%.1f", 100.0 * grid["poem"]["accuracy"].get<double>(),
                 100.0 * grid["poem"]["ci95"].get<double>(), 100.0 * grid["protonet"]["accuracy"].get<double>(),
                 100.0 * grid["protonet"]["ci95"].get<double>()) +
                 fmt(", gap %.2f points, %.1f min", gap, grid_minutes));
    }
    {
      const std::string ckpt = "decoder.encoder_checkpoint=\"" + (grid_dir / "checkpoints" / "poem.ckpt").string() + "\"";
      const json recon = run("gridworld-recon", 1, threads, {ckpt}, root / "gridworld-recon-seed1");
      const double acc = 100.0 * recon["decoder"]["cell_accuracy"].get<double>();
      const double empty = 100.0 * recon["decoder"]["all_empty_accuracy"].get<double>();
      report(10, acc >= 80.0 && acc - empty >= 15.0,
             "reconstruction on 50 unseen mazes: cell accuracy >= 80%, >= 15 points over all-empty",
             fmt("cell accuracy %.1f%%, all-empty %.1f%%, margin %.1f points", acc, empty, acc - empty));
    }

    // 11: rerun the seed-1 partial benchmark from its own config.json.
    {
      const fs::path first = root / "bench-po-seed1";
      const fs::path again = root / "bench-po-seed1-rerun";
      poem::RunSpec spec;
      spec.command = "bench-po";
      spec.config_file = first / "config.json";
      spec.threads = 1;
      const json config = poem::resolve_config(spec);
      std::cerr << "[acceptance] rerun bench-po seed 1 -> " << again.string() << '\n';
      poem::run_experiment(config, again, false, &std::cerr);
      const std::string a = slurp(first / "summary.csv");
      const std::string b = slurp(again / "summary.csv");
      report(11, !a.empty() && a == b && threads == 1,
             "bench-po rerun from config.json with --threads 1 gives identical summary.csv bytes",
             std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "DIFFERENT") +
                 (threads == 1 ? "" : " (first run used threads > 1)"));
    }
  } catch (const std::exception& e) {
    std::cerr << "acceptance aborted: " << e.what() << '\n';
    g_report["aborted"] = e.what();
  }

  std::ofstream(root / "acceptance_report.json") << g_report.dump(2) << '\n';
  std::size_t passed = 0;
  for (const auto& l : g_lines) passed += l.pass ? 1 : 0;
  std::printf("%zu/11 criteria passed\n", passed);
  return passed == 11 ? 0 : 1;
}
