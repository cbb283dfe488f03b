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

// Crossing-wall mazes, egocentric 7x7 observations and two trajectory
// planners (shortest path and count-based exploration).
//
// Coordinates: x grows east, y grows south; (0, 0) is the top-left corner.

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "poem/episodes.hpp"

namespace poem {

enum class CellType : std::uint8_t { kEmpty = 0, kWall = 1, kStart = 2, kGoal = 3 };
inline constexpr std::size_t kCellTypes = 4;

enum class Direction : std::uint8_t { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };
enum class Action : std::uint8_t { kForward = 0, kLeft = 1, kRight = 2 };

inline constexpr int kViewSize = 7;
inline constexpr std::size_t kViewCells = kViewSize * kViewSize;
inline constexpr std::size_t kObservationWidth = kViewCells * kCellTypes + 3;

struct Grid {
  int width = 0;
  int height = 0;
  std::vector<CellType> cells;  // row-major, y * width + x
  std::uint64_t seed = 0;

  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  CellType at(int x, int y) const { return cells[static_cast<std::size_t>(y * width + x)]; }
  CellType& at(int x, int y) { return cells[static_cast<std::size_t>(y * width + x)]; }
  bool walkable(int x, int y) const { return inside(x, y) && at(x, y) != CellType::kWall; }
  double wall_fraction() const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

struct AgentState {
  int x = 0;
  int y = 0;
  Direction dir = Direction::kEast;

  auto operator<=>(const AgentState&) const = default;
};

/// Egocentric window: row 0 is farthest ahead, the agent sits at row 6,
/// column 3, facing up. Invisible cells are all-zero.
struct Observation {
  std::array<double, kViewCells * kCellTypes> window{};  // [row][col][cell type]
  std::array<bool, kViewCells> visible{};
  AgentState pose;
  std::array<double, 3> pose_features{};  // x / (W-1), y / (H-1), dir / 3

  double cell(int row, int col, CellType t) const {
    return window[(static_cast<std::size_t>(row) * kViewSize + static_cast<std::size_t>(col)) * kCellTypes +
                  static_cast<std::size_t>(t)];
  }
  bool is_visible(int row, int col) const {
    return visible[static_cast<std::size_t>(row) * kViewSize + static_cast<std::size_t>(col)];
  }
  /// Flattened window followed by pose features.
  std::vector<double> features() const;
};

struct Trajectory {
  std::vector<AgentState> states;
  std::vector<Action> actions;
  std::vector<Observation> observations;
};

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two crossing walls (one horizontal, one vertical), one gap each; start at
/// (1, 1), goal at (size-2, size-2). Regenerates until the goal is reachable.
Grid gen_maze(std::uint64_t seed, int size = 11, int max_retries = 100);

/// Breadth-first reachability on cells.
bool solvable(const Grid& grid);

AgentState step(const Grid& grid, const AgentState& state, Action action);

/// World cell seen at window (row, col) from `state`.
std::array<int, 2> window_to_world(const AgentState& state, int row, int col);

Observation observe(const Grid& grid, const AgentState& state);

AgentState initial_state(const Grid& grid);

/// Shortest action sequence over (x, y, dir) from the start facing east.
Trajectory optimal_trajectory(const Grid& grid);

/// Greedy count-based exploration; returns budget + 1 observations.
Trajectory exploratory_trajectory(const Grid& grid, std::size_t budget, std::uint64_t seed);

struct GridEpisodeConfig {
  std::size_t environments = 5;
  std::size_t queries = 2;
  int size = 11;
  std::size_t explore_budget = 200;
  std::size_t max_retries = 20;
};

View observation_view(const Observation& obs, std::size_t item);

/// Support: deduplicated optimal-trajectory observations. Queries: exploratory
/// observations at poses absent from the support.
Episode sample_env_episode(std::uint64_t master_seed, std::uint64_t episode_index, const GridEpisodeConfig& cfg);

/// Deduplicated optimal-trajectory observations of one maze, as views.
std::vector<View> support_views(const Grid& grid, std::size_t item = 0);

class GridEpisodeSource final : public EpisodeSource {
 public:
  GridEpisodeSource(GridEpisodeConfig config, std::uint64_t stream_seed)
      : config_(config), stream_seed_(stream_seed) {}

  Episode episode(std::uint64_t index) const override {
    return sample_env_episode(stream_seed_, index, config_);
  }
  std::size_t feature_width() const override { return kObservationWidth; }

 private:
  GridEpisodeConfig config_;
  std::uint64_t stream_seed_;
};

/// Seed of maze m in an episode's environment set.
std::uint64_t env_seed(std::uint64_t master_seed, std::uint64_t episode_index, std::size_t env, std::size_t attempt);

nlohmann::json grid_to_json(const Grid& grid);
nlohmann::json trajectory_to_json(const Trajectory& trajectory);

/// [H, W, cell type] one-hot, flattened row-major.
std::vector<double> reconstruction_target(const Grid& grid);

/// Fraction of cells whose argmax over the per-cell logits matches the grid.
double cell_accuracy(std::span<const double> logits, const Grid& grid);

/// Fraction of cells that are empty (the accuracy of predicting empty everywhere).
double all_empty_accuracy(const Grid& grid);

}  // namespace poem
