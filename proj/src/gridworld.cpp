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

#include "poem/gridworld.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "poem/rng.hpp"

namespace poem {
namespace {

constexpr std::array<std::array<int, 2>, 4> kHeading{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};

std::array<int, 2> heading(Direction d) { return kHeading[static_cast<std::size_t>(d)]; }

Direction turn(Direction d, int quarter_turns) {
  return static_cast<Direction>((static_cast<int>(d) + quarter_turns + 4) % 4);
}

std::size_t state_index(const Grid& g, const AgentState& s) {
  return (static_cast<std::size_t>(s.y) * static_cast<std::size_t>(g.width) + static_cast<std::size_t>(s.x)) * 4 +
         static_cast<std::size_t>(s.dir);
}

const char* action_name(Action a) {
  switch (a) {
    case Action::kForward: return "forward";
    case Action::kLeft: return "left";
    case Action::kRight: return "right";
  }
  return "?";
}

constexpr std::array<Action, 3> kActions{Action::kForward, Action::kLeft, Action::kRight};

}  // namespace

double Grid::wall_fraction() const {
  const auto walls = std::count(cells.begin(), cells.end(), CellType::kWall);
  return static_cast<double>(walls) / static_cast<double>(cells.size());
}

bool solvable(const Grid& grid) {
  const int gx = grid.width - 2;
  const int gy = grid.height - 2;
  std::vector<bool> seen(grid.cells.size(), false);
  std::deque<std::array<int, 2>> frontier{{1, 1}};
  seen[static_cast<std::size_t>(grid.width + 1)] = true;
  while (!frontier.empty()) {
    const auto [x, y] = frontier.front();
    frontier.pop_front();
    if (x == gx && y == gy) return true;
    for (const auto& [dx, dy] : kHeading) {
      const int nx = x + dx;
      const int ny = y + dy;
      if (!grid.walkable(nx, ny)) continue;
      auto idx = static_cast<std::size_t>(ny * grid.width + nx);
      if (seen[idx]) continue;
      seen[idx] = true;
      frontier.push_back({nx, ny});
    }
  }
  return false;
}

Grid gen_maze(std::uint64_t seed, int size, int max_retries) {
  if (size < 7 || size % 2 == 0) throw GridError("maze size must be odd and at least 7");
  const std::size_t slots = static_cast<std::size_t>((size - 3) / 2 - 1);  // even coords in [2, size-3]
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(attempt)));
    Grid g;
    g.width = size;
    g.height = size;
    g.seed = seed;
    g.cells.assign(static_cast<std::size_t>(size * size), CellType::kEmpty);
    for (int i = 0; i < size; ++i) {
      g.at(i, 0) = g.at(i, size - 1) = CellType::kWall;
      g.at(0, i) = g.at(size - 1, i) = CellType::kWall;
    }
    const int row = 2 + 2 * static_cast<int>(rng.index(0, slots));
    const int col = 2 + 2 * static_cast<int>(rng.index(0, slots));
    for (int i = 1; i < size - 1; ++i) {
      g.at(i, row) = CellType::kWall;
      g.at(col, i) = CellType::kWall;
    }
    int gap_x = 0;
    do {
      gap_x = static_cast<int>(rng.index(1, static_cast<std::size_t>(size - 2)));
    } while (gap_x == col);
    int gap_y = 0;
    do {
      gap_y = static_cast<int>(rng.index(1, static_cast<std::size_t>(size - 2)));
    } while (gap_y == row);
    g.at(gap_x, row) = CellType::kEmpty;
    g.at(col, gap_y) = CellType::kEmpty;
    g.at(1, 1) = CellType::kStart;
    g.at(size - 2, size - 2) = CellType::kGoal;
    if (solvable(g)) return g;
  }
  throw GridError("maze generation exhausted its retry budget");
}

AgentState initial_state(const Grid&) { return AgentState{1, 1, Direction::kEast}; }

AgentState step(const Grid& grid, const AgentState& s, Action action) {
  switch (action) {
    case Action::kLeft: return {s.x, s.y, turn(s.dir, -1)};
    case Action::kRight: return {s.x, s.y, turn(s.dir, 1)};
    case Action::kForward: {
      const auto [dx, dy] = heading(s.dir);
      if (grid.walkable(s.x + dx, s.y + dy)) return {s.x + dx, s.y + dy, s.dir};
      return s;
    }
  }
  return s;
}

std::array<int, 2> window_to_world(const AgentState& s, int row, int col) {
  const int ahead = kViewSize - 1 - row;
  const int lateral = col - kViewSize / 2;
  const auto [fx, fy] = heading(s.dir);
  const auto [rx, ry] = heading(turn(s.dir, 1));
  return {s.x + ahead * fx + lateral * rx, s.y + ahead * fy + lateral * ry};
}

Observation observe(const Grid& grid, const AgentState& state) {
  Observation obs;
  obs.pose = state;
  obs.pose_features = {static_cast<double>(state.x) / static_cast<double>(grid.width - 1),
                       static_cast<double>(state.y) / static_cast<double>(grid.height - 1),
                       static_cast<double>(state.dir) / 3.0};

  std::array<bool, kViewCells> inside{};
  std::array<bool, kViewCells> open{};
  std::array<CellType, kViewCells> type{};
  for (int r = 0; r < kViewSize; ++r)
    for (int c = 0; c < kViewSize; ++c) {
      const auto [wx, wy] = window_to_world(state, r, c);
      const auto i = static_cast<std::size_t>(r * kViewSize + c);
      inside[i] = grid.inside(wx, wy);
      if (inside[i]) {
        type[i] = grid.at(wx, wy);
        open[i] = type[i] != CellType::kWall;
      }
    }

  // Light propagation: visible open cells light their lateral neighbours
  // (both sweeps within a row) and the cell straight ahead.
  auto& vis = obs.visible;
  auto mark = [&](int r, int c) {
    const auto i = static_cast<std::size_t>(r * kViewSize + c);
    if (inside[i]) vis[i] = true;
  };
  auto lit = [&](int r, int c) {
    const auto i = static_cast<std::size_t>(r * kViewSize + c);
    return vis[i] && open[i];
  };
  mark(kViewSize - 1, kViewSize / 2);
  for (int r = kViewSize - 1; r >= 0; --r) {
    for (int c = 0; c + 1 < kViewSize; ++c)
      if (lit(r, c)) mark(r, c + 1);
    for (int c = kViewSize - 1; c > 0; --c)
      if (lit(r, c)) mark(r, c - 1);
    if (r > 0)
      for (int c = 0; c < kViewSize; ++c)
        if (lit(r, c)) mark(r - 1, c);
  }

  for (std::size_t i = 0; i < kViewCells; ++i)
    if (vis[i]) obs.window[i * kCellTypes + static_cast<std::size_t>(type[i])] = 1.0;
  return obs;
}

std::vector<double> Observation::features() const {
  std::vector<double> out(window.begin(), window.end());
  out.insert(out.end(), pose_features.begin(), pose_features.end());
  return out;
}

Trajectory optimal_trajectory(const Grid& grid) {
  const std::size_t n_states = grid.cells.size() * 4;
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> parent(n_states, kNone);
  std::vector<Action> via(n_states, Action::kForward);
  std::vector<AgentState> states(n_states);

  const AgentState start = initial_state(grid);
  const int gx = grid.width - 2;
  const int gy = grid.height - 2;
  std::deque<AgentState> frontier{start};
  parent[state_index(grid, start)] = state_index(grid, start);
  states[state_index(grid, start)] = start;
  std::size_t goal_index = kNone;
  while (!frontier.empty()) {
    const AgentState s = frontier.front();
    frontier.pop_front();
    if (s.x == gx && s.y == gy) {
      goal_index = state_index(grid, s);
      break;
    }
    for (Action a : kActions) {
      const AgentState nxt = step(grid, s, a);
      const std::size_t ni = state_index(grid, nxt);
      if (parent[ni] != kNone) continue;
      parent[ni] = state_index(grid, s);
      via[ni] = a;
      states[ni] = nxt;
      frontier.push_back(nxt);
    }
  }
  if (goal_index == kNone) throw GridError("goal unreachable");

  Trajectory t;
  for (std::size_t i = goal_index;; i = parent[i]) {
    t.states.push_back(states[i]);
    if (parent[i] == i) break;
    t.actions.push_back(via[i]);
  }
  std::reverse(t.states.begin(), t.states.end());
  std::reverse(t.actions.begin(), t.actions.end());
  for (const auto& s : t.states) t.observations.push_back(observe(grid, s));
  return t;
}

Trajectory exploratory_trajectory(const Grid& grid, std::size_t budget, std::uint64_t seed) {
  if (budget == 0) throw GridError("exploration budget must be positive");
  Rng rng(seed);
  std::vector<std::uint32_t> counts(grid.cells.size() * 4, 0);
  Trajectory t;
  AgentState s = initial_state(grid);
  counts[state_index(grid, s)] = 1;
  t.states.push_back(s);
  t.observations.push_back(observe(grid, s));
  for (std::size_t k = 0; k < budget; ++k) {
    std::array<AgentState, 3> next{};
    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::size_t> ties;
    for (std::size_t a = 0; a < kActions.size(); ++a) {
      next[a] = step(grid, s, kActions[a]);
      const std::uint32_t c = counts[state_index(grid, next[a])];
      if (c < best) {
        best = c;
        ties.clear();
      }
      if (c == best) ties.push_back(a);
    }
    const std::size_t pick = ties.size() == 1 ? ties[0] : ties[rng.index(0, ties.size() - 1)];
    s = next[pick];
    ++counts[state_index(grid, s)];
    t.actions.push_back(kActions[pick]);
    t.states.push_back(s);
    t.observations.push_back(observe(grid, s));
  }
  return t;
}

View observation_view(const Observation& obs, std::size_t item) {
  View v;
  v.patch_shape = {static_cast<std::size_t>(kViewSize), static_cast<std::size_t>(kViewSize), kCellTypes};
  v.patch.assign(obs.window.begin(), obs.window.end());
  v.coords.assign(obs.pose_features.begin(), obs.pose_features.end());
  v.item_index = item;
  v.placement = {obs.pose.x, obs.pose.y, static_cast<int>(obs.pose.dir)};
  return v;
}

std::vector<View> support_views(const Grid& grid, std::size_t item) {
  std::set<AgentState> seen;
  std::vector<View> out;
  for (const auto& obs : optimal_trajectory(grid).observations)
    if (seen.insert(obs.pose).second) out.push_back(observation_view(obs, item));
  return out;
}

std::uint64_t env_seed(std::uint64_t master_seed, std::uint64_t episode_index, std::size_t env, std::size_t attempt) {
  return mix_seed(mix_seed(mix_seed(master_seed, episode_index), env), attempt);
}

Episode sample_env_episode(std::uint64_t master_seed, std::uint64_t episode_index, const GridEpisodeConfig& cfg) {
  if (cfg.environments == 0 || cfg.queries == 0) throw GridError("environments and queries must be positive");
  Episode ep;
  ep.meta = {cfg.environments, 0, Condition::kPartial, mix_seed(master_seed, episode_index)};
  ep.support.resize(cfg.environments);
  for (std::size_t m = 0; m < cfg.environments; ++m) {
    bool done = false;
    for (std::size_t attempt = 0; attempt < cfg.max_retries && !done; ++attempt) {
      const std::uint64_t seed = env_seed(master_seed, episode_index, m, attempt);
      const Grid grid = gen_maze(seed, cfg.size);
      std::vector<View> support = support_views(grid, m);
      std::set<AgentState> support_poses;
      for (const auto& v : support) support_poses.insert({v.placement[0], v.placement[1],
                                                          static_cast<Direction>(v.placement[2])});
      const Trajectory explore = exploratory_trajectory(grid, cfg.explore_budget, mix_seed(seed, 1));
      std::vector<const Observation*> candidates;
      std::set<AgentState> candidate_poses;
      for (const auto& obs : explore.observations)
        if (!support_poses.count(obs.pose) && candidate_poses.insert(obs.pose).second) candidates.push_back(&obs);
      if (candidates.size() < cfg.queries) continue;

      Rng rng(mix_seed(seed, 2));
      for (std::size_t q = 0; q < cfg.queries; ++q) {
        const std::size_t pick = rng.index(q, candidates.size() - 1);
        std::swap(candidates[q], candidates[pick]);
        ep.queries.push_back(observation_view(*candidates[q], m));
        ep.targets.push_back(m);
      }
      ep.support[m] = std::move(support);
      done = true;
    }
    if (!done) throw GridError("could not find enough query candidates");
  }
  return ep;
}

nlohmann::json grid_to_json(const Grid& grid) {
  nlohmann::json rows = nlohmann::json::array();
  for (int y = 0; y < grid.height; ++y) {
    nlohmann::json row = nlohmann::json::array();
    for (int x = 0; x < grid.width; ++x) row.push_back(static_cast<int>(grid.at(x, y)));
    rows.push_back(std::move(row));
  }
  return {{"width", grid.width},
          {"height", grid.height},
          {"seed", grid.seed},
          {"legend", {"empty", "wall", "start", "goal"}},
          {"cells", std::move(rows)}};
}

nlohmann::json trajectory_to_json(const Trajectory& trajectory) {
  nlohmann::json actions = nlohmann::json::array();
  for (Action a : trajectory.actions) actions.push_back(action_name(a));
  nlohmann::json poses = nlohmann::json::array();
  for (const auto& s : trajectory.states) poses.push_back({s.x, s.y, static_cast<int>(s.dir)});
  return {{"actions", std::move(actions)}, {"poses", std::move(poses)}};
}

std::vector<double> reconstruction_target(const Grid& grid) {
  std::vector<double> out(grid.cells.size() * kCellTypes, 0.0);
  for (std::size_t i = 0; i < grid.cells.size(); ++i) out[i * kCellTypes + static_cast<std::size_t>(grid.cells[i])] = 1.0;
  return out;
}

double cell_accuracy(std::span<const double> logits, const Grid& grid) {
  if (logits.size() != grid.cells.size() * kCellTypes) throw GridError("logit count does not match grid");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    const auto cell = logits.subspan(i * kCellTypes, kCellTypes);
    const auto best = static_cast<std::size_t>(std::max_element(cell.begin(), cell.end()) - cell.begin());
    hits += best == static_cast<std::size_t>(grid.cells[i]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(grid.cells.size());
}

double all_empty_accuracy(const Grid& grid) {
  const auto empty = std::count(grid.cells.begin(), grid.cells.end(), CellType::kEmpty);
  return static_cast<double>(empty) / static_cast<double>(grid.cells.size());
}

}  // namespace poem
