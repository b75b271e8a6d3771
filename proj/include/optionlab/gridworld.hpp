#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "optionlab/io.hpp"
#include "optionlab/mdp.hpp"
#include "optionlab/rng.hpp"

#include "json.hpp"

namespace optionlab {

enum class GoalMode { fixed_goal, random_goal, random_both };

inline std::string to_string(GoalMode mode) {
  switch (mode) {
    case GoalMode::fixed_goal: return "fixed_goal";
    case GoalMode::random_goal: return "random_goal";
    case GoalMode::random_both: return "random_both";
  }
  throw std::logic_error("bad mode");
}

inline GoalMode goal_mode_from_string(const std::string& s) {
  if (s == "fixed_goal") return GoalMode::fixed_goal;
  if (s == "random_goal") return GoalMode::random_goal;
  if (s == "random_both") return GoalMode::random_both;
  throw std::invalid_argument("unknown goal mode: " + s);
}

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell& o) const { return row == o.row && col == o.col; }
};

/// Four-room floor plan: outer boundary walled, interior walls on one row
/// and one column with four door cells. Arbitrary wall sets are
/// representable so rotated layouts stay first-class.
struct RoomLayout {
  int n = 0;
  std::vector<char> wall;       // n*n, 1 = wall
  std::vector<Cell> door_cells;

  bool is_wall(int r, int c) const {
    if (r < 0 || r >= n || c < 0 || c >= n) return true;
    return wall[static_cast<std::size_t>(r) * n + c] != 0;
  }
  int cell_index(const Cell& c) const { return c.row * n + c.col; }

  /// Free cells in row-major order.
  std::vector<Cell> free_cells() const {
    std::vector<Cell> out;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (!is_wall(r, c)) out.push_back({r, c});
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n"] = n;
    nlohmann::json walls = nlohmann::json::array();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (is_wall(r, c)) walls.push_back({r, c});
    j["wall_cells"] = walls;
    nlohmann::json doors = nlohmann::json::array();
    for (const Cell& d : door_cells) doors.push_back({d.row, d.col});
    j["door_cells"] = doors;
    return j;
  }
};

/// Breadth-first reachable set from the first free cell.
inline int flood_fill_count(const RoomLayout& layout) {
  const auto cells = layout.free_cells();
  if (cells.empty()) return 0;
  std::vector<char> seen(static_cast<std::size_t>(layout.n) * layout.n, 0);
  std::queue<Cell> frontier;
  frontier.push(cells.front());
  seen[layout.cell_index(cells.front())] = 1;
  int count = 0;
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop();
    ++count;
    for (int k = 0; k < 4; ++k) {
      const int r2 = c.row + dr[k], c2 = c.col + dc[k];
      if (layout.is_wall(r2, c2)) continue;
      const int idx = r2 * layout.n + c2;
      if (!seen[idx]) {
        seen[idx] = 1;
        frontier.push({r2, c2});
      }
    }
  }
  return count;
}

/// Canonical four-room layout: interior walls at row m and column m with
/// m = floor(n/2); doors at (m, floor(m/2)), (m, m + ceil((n-m)/2)),
/// (floor(m/2), m), (m + ceil((n-m)/2), m).
inline RoomLayout four_rooms_layout(int n) {
  if (n < 8) throw std::invalid_argument("four_rooms_layout: n must be >= 8");
  RoomLayout layout;
  layout.n = n;
  layout.wall.assign(static_cast<std::size_t>(n) * n, 0);
  auto set_wall = [&](int r, int c) { layout.wall[static_cast<std::size_t>(r) * n + c] = 1; };
  for (int i = 0; i < n; ++i) {
    set_wall(0, i);
    set_wall(n - 1, i);
    set_wall(i, 0);
    set_wall(i, n - 1);
  }
  const int m = n / 2;
  for (int i = 1; i < n - 1; ++i) {
    set_wall(m, i);
    set_wall(i, m);
  }
  const int near = m / 2;
  const int far = m + (n - m + 1) / 2;
  layout.door_cells = {{m, near}, {m, far}, {near, m}, {far, m}};
  for (const Cell& d : layout.door_cells)
    layout.wall[static_cast<std::size_t>(d.row) * n + d.col] = 0;
  if (flood_fill_count(layout) != static_cast<int>(layout.free_cells().size()))
    throw std::logic_error("four_rooms_layout: disconnected layout");
  return layout;
}

struct GridState {
  Cell agent;
  Cell goal;
};

// Action encoding shared by the whole library: 0=up 1=down 2=left 3=right.
constexpr int kGridActions = 4;

inline Cell move_cell(const RoomLayout& layout, const Cell& from, int action) {
  static const int dr[4] = {-1, 1, 0, 0};
  static const int dc[4] = {0, 0, -1, 1};
  if (action < 0 || action >= kGridActions)
    throw std::invalid_argument("move_cell: bad action");
  const Cell to{from.row + dr[action], from.col + dc[action]};
  return layout.is_wall(to.row, to.col) ? from : to;
}

struct StepResult {
  GridState next;
  double reward = 0.0;
  bool done = false;
};

/// Deterministic environment step. Terminal states may not be stepped.
inline StepResult step(const RoomLayout& layout, const GridState& state, int action) {
  if (state.agent == state.goal)
    throw std::invalid_argument("step: state is terminal");
  StepResult out;
  out.next.agent = move_cell(layout, state.agent, action);
  out.next.goal = state.goal;
  if (out.next.agent == out.next.goal) {
    out.reward = 1.0;
    out.done = true;
  }
  return out;
}

/// Stable hash key for an (agent, goal) pair; the dense index comes from
/// interning these keys in enumeration order.
inline std::uint64_t grid_state_key(const RoomLayout& layout, const GridState& s) {
  return (static_cast<std::uint64_t>(layout.cell_index(s.agent)) << 32) |
         static_cast<std::uint64_t>(layout.cell_index(s.goal));
}

/// Deterministic enumeration: agent cells row-major (outer), goal cells
/// row-major (inner). Terminal states are not part of the list.
inline std::vector<GridState> enumerate_states(const RoomLayout& layout, GoalMode mode,
                                               const std::vector<Cell>& goal_cells) {
  const auto cells = layout.free_cells();
  std::vector<GridState> out;
  if (mode == GoalMode::fixed_goal) {
    if (goal_cells.empty()) throw std::invalid_argument("enumerate_states: no goals");
    auto is_goal = [&](const Cell& c) {
      return std::any_of(goal_cells.begin(), goal_cells.end(),
                         [&](const Cell& g) { return g == c; });
    };
    for (const Cell& a : cells)
      if (!is_goal(a)) out.push_back({a, goal_cells.front()});
  } else {
    for (const Cell& a : cells)
      for (const Cell& g : cells)
        if (!(a == g)) out.push_back({a, g});
  }
  return out;
}

/// A four-room MDP with its enumeration bookkeeping. The last state index
/// is the shared absorbing terminal: entering any goal pays +1 once and
/// transitions there; the terminal self-loops with reward 0.
struct CompiledGrid {
  RoomLayout layout;
  GoalMode mode = GoalMode::fixed_goal;
  std::vector<Cell> goal_cells;         // primary goal first
  Cell start_cell;                      // anchors rho0 in random_goal mode
  std::vector<GridState> states;        // non-terminal, enumeration order
  std::unordered_map<std::uint64_t, int> index_of;
  int terminal_index = 0;
  Mdp mdp;

  int state_index(const GridState& s) const {
    const auto it = index_of.find(grid_state_key(layout, s));
    if (it == index_of.end()) throw std::invalid_argument("unknown grid state");
    return it->second;
  }
};

inline CompiledGrid compile_grid(const RoomLayout& layout, GoalMode mode,
                                 std::vector<Cell> goal_cells, Cell start_cell,
                                 double gamma) {
  const auto states = enumerate_states(layout, mode, goal_cells);
  const int n_states = static_cast<int>(states.size()) + 1;
  CompiledGrid grid{layout,      mode, std::move(goal_cells), start_cell, states,
                    {},          static_cast<int>(states.size()),
                    Mdp(n_states, kGridActions, gamma)};
  grid.index_of.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i)
    grid.index_of.emplace(grid_state_key(layout, states[i]), static_cast<int>(i));

  auto is_goal_cell = [&](const Cell& c, const GridState& s) {
    if (mode == GoalMode::fixed_goal)
      return std::any_of(grid.goal_cells.begin(), grid.goal_cells.end(),
                         [&](const Cell& g) { return g == c; });
    return c == s.goal;
  };

  for (std::size_t i = 0; i < states.size(); ++i) {
    const GridState& s = states[i];
    for (int a = 0; a < kGridActions; ++a) {
      const Cell moved = move_cell(layout, s.agent, a);
      if (is_goal_cell(moved, s)) {
        grid.mdp.add_transition(static_cast<int>(i), a, grid.terminal_index, 1.0);
        grid.mdp.set_reward(static_cast<int>(i), a, 1.0);
      } else {
        const GridState next{moved, s.goal};
        grid.mdp.add_transition(static_cast<int>(i), a, grid.state_index(next), 1.0);
      }
    }
  }
  for (int a = 0; a < kGridActions; ++a)
    grid.mdp.add_transition(grid.terminal_index, a, grid.terminal_index, 1.0);
  grid.mdp.set_terminal(grid.terminal_index);

  Vec rho0 = Vec::Zero(n_states);
  if (mode == GoalMode::random_goal) {
    int supported = 0;
    for (std::size_t i = 0; i < states.size(); ++i)
      if (states[i].agent == start_cell) ++supported;
    if (supported == 0) throw std::invalid_argument("compile_grid: bad start cell");
    for (std::size_t i = 0; i < states.size(); ++i)
      if (states[i].agent == start_cell) rho0[static_cast<int>(i)] = 1.0 / supported;
  } else {
    for (std::size_t i = 0; i < states.size(); ++i)
      rho0[static_cast<int>(i)] = 1.0 / static_cast<double>(states.size());
  }
  grid.mdp.set_rho0(rho0);
  grid.mdp.validate();
  return grid;
}

/// Canonical builder. The primary goal is the free cell closest to the
/// bottom-right corner; extra goals (reward-density knob) are drawn from
/// the remaining free cells with the given seed. The start anchor is the
/// top-left-most free cell.
inline CompiledGrid build_four_rooms(int n, GoalMode mode, std::uint64_t seed,
                                     int n_goals = 1, double gamma = 0.99) {
  if (n_goals < 1) throw std::invalid_argument("build_four_rooms: need >= 1 goal");
  const RoomLayout layout = four_rooms_layout(n);
  const auto cells = layout.free_cells();
  const Cell start = cells.front();
  const Cell primary = cells.back();
  std::vector<Cell> goals{primary};
  if (mode != GoalMode::fixed_goal && n_goals != 1)
    throw std::invalid_argument("build_four_rooms: multiple goals need fixed_goal mode");
  Rng rng(seed);
  while (static_cast<int>(goals.size()) < n_goals) {
    const Cell candidate = cells[rng.uniform_int(static_cast<int>(cells.size()))];
    const bool taken = candidate == start ||
                       std::any_of(goals.begin(), goals.end(),
                                   [&](const Cell& g) { return g == candidate; });
    if (!taken) goals.push_back(candidate);
  }
  return compile_grid(layout, mode, goals, start, gamma);
}

/// Default episode cap for sampling-based algorithms.
inline int default_horizon(int n) { return 4 * n * n; }

// ---------------------------------------------------------------------------
// 180-degree rotation

inline Cell rotate_cell(int n, const Cell& c) { return {n - 1 - c.row, n - 1 - c.col}; }

inline RoomLayout rotate_180(const RoomLayout& layout) {
  RoomLayout out;
  out.n = layout.n;
  out.wall.assign(layout.wall.size(), 0);
  for (int r = 0; r < layout.n; ++r)
    for (int c = 0; c < layout.n; ++c)
      if (layout.is_wall(r, c)) {
        const Cell rc = rotate_cell(layout.n, {r, c});
        out.wall[static_cast<std::size_t>(rc.row) * out.n + rc.col] = 1;
      }
  for (const Cell& d : layout.door_cells) out.door_cells.push_back(rotate_cell(layout.n, d));
  return out;
}

struct RotatedGrid {
  CompiledGrid grid;            // compiled rotation of the input grid
  std::vector<int> bijection;   // original state index -> rotated state index
};

/// Rotates a compiled grid and returns the exact state bijection
/// (including terminal -> terminal). Rotating twice composes to identity.
inline RotatedGrid rotate_180(const CompiledGrid& grid) {
  const RoomLayout rotated = rotate_180(grid.layout);
  std::vector<Cell> goals;
  for (const Cell& g : grid.goal_cells) goals.push_back(rotate_cell(grid.layout.n, g));
  const Cell start = rotate_cell(grid.layout.n, grid.start_cell);
  RotatedGrid out{compile_grid(rotated, grid.mode, goals, start, grid.mdp.gamma()), {}};
  out.bijection.resize(grid.mdp.n_states());
  for (std::size_t i = 0; i < grid.states.size(); ++i) {
    const GridState rotated_state{rotate_cell(grid.layout.n, grid.states[i].agent),
                                  rotate_cell(grid.layout.n, grid.states[i].goal)};
    out.bijection[i] = out.grid.state_index(rotated_state);
  }
  out.bijection[grid.terminal_index] = out.grid.terminal_index;
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

/// Grayscale field heatmap over cells: walls are 0, values map linearly to
/// [30, 255] (constant fields render mid-gray). values is indexed by
/// row-major cell index; cells absent from the field render as 30.
inline std::vector<unsigned char> field_image(const RoomLayout& layout,
                                              const std::map<int, double>& values) {
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& [idx, v] : values) {
    if (first) {
      lo = hi = v;
      first = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::vector<unsigned char> img(static_cast<std::size_t>(layout.n) * layout.n, 0);
  for (int r = 0; r < layout.n; ++r)
    for (int c = 0; c < layout.n; ++c) {
      if (layout.is_wall(r, c)) continue;
      const auto it = values.find(r * layout.n + c);
      if (it == values.end()) {
        img[static_cast<std::size_t>(r) * layout.n + c] = 30;
        continue;
      }
      double unit = 0.5;
      if (hi > lo) unit = (it->second - lo) / (hi - lo);
      img[static_cast<std::size_t>(r) * layout.n + c] =
          static_cast<unsigned char>(30 + std::lround(unit * 225.0));
    }
  return img;
}

inline void render_field_pgm(const std::string& path, const RoomLayout& layout,
                             const std::map<int, double>& values) {
  write_pgm(path, layout.n, layout.n, field_image(layout, values));
}

/// Layout snapshot: walls 0, free 255, goals 100, start 180.
inline void render_layout_pgm(const std::string& path, const RoomLayout& layout,
                              const std::vector<Cell>& goals, const Cell& start) {
  std::vector<unsigned char> img(static_cast<std::size_t>(layout.n) * layout.n, 0);
  for (int r = 0; r < layout.n; ++r)
    for (int c = 0; c < layout.n; ++c)
      if (!layout.is_wall(r, c)) img[static_cast<std::size_t>(r) * layout.n + c] = 255;
  img[static_cast<std::size_t>(start.row) * layout.n + start.col] = 180;
  for (const Cell& g : goals) img[static_cast<std::size_t>(g.row) * layout.n + g.col] = 100;
  write_pgm(path, layout.n, layout.n, img);
}

}  // namespace optionlab
