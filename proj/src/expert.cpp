#include "synpo/expert.hpp"

#include <array>
#include <limits>

namespace synpo {

namespace {

constexpr int kUnreached = std::numeric_limits<int>::max();

// Distance-to-target field via BFS from `to` over open cells.
std::array<int, kGridCells> distance_field(const Maze& maze, Cell to) {
  std::array<int, kGridCells> dist;
  dist.fill(kUnreached);
  std::vector<Cell> frontier{to}, next;
  dist[to.row * kGridSize + to.col] = 0;
  int d = 0;
  while (!frontier.empty()) {
    ++d;
    for (Cell c : frontier) {
      const Cell nbrs[4] = {{c.row - 1, c.col}, {c.row + 1, c.col}, {c.row, c.col - 1},
                            {c.row, c.col + 1}};
      for (Cell n : nbrs) {
        if (!maze.in_bounds(n) || maze.wall(n)) continue;
        int& dn = dist[n.row * kGridSize + n.col];
        if (dn == kUnreached) {
          dn = d;
          next.push_back(n);
        }
      }
    }
    std::swap(frontier, next);
    next.clear();
  }
  return dist;
}

Cell apply_move(Cell c, int action) {
  switch (static_cast<Action>(action)) {
    case Action::Up: return {c.row - 1, c.col};
    case Action::Down: return {c.row + 1, c.col};
    case Action::Left: return {c.row, c.col - 1};
    case Action::Right: return {c.row, c.col + 1};
    default: return c;
  }
}

}  // namespace

std::vector<int> shortest_path(const Maze& maze, Cell from, Cell to) {
  if (!maze.in_bounds(from) || maze.wall(from) || !maze.in_bounds(to) || maze.wall(to))
    throw std::invalid_argument("shortest_path: endpoints must be open cells");
  if (from == to) return {};

  const auto dist = distance_field(maze, to);
  if (dist[from.row * kGridSize + from.col] == kUnreached)
    throw NoPathError("shortest_path: target unreachable");

  // Greedy descent on the distance field; trying actions in priority order
  // (up, down, left, right) fixes the tie-breaking.
  std::vector<int> actions;
  Cell cur = from;
  while (!(cur == to)) {
    const int d = dist[cur.row * kGridSize + cur.col];
    for (int a = 0; a < 4; ++a) {
      const Cell n = apply_move(cur, a);
      if (!maze.in_bounds(n) || maze.wall(n)) continue;
      if (dist[n.row * kGridSize + n.col] == d - 1) {
        actions.push_back(a);
        cur = n;
        break;
      }
    }
  }
  return actions;
}

int expert_action(const WorldState& state) {
  if (state.terminal()) throw std::runtime_error("expert_action: episode already terminal");
  const int goal = static_cast<int>(state.next_goal());
  const TreasureState& t = state.treasures.at(goal);
  if (t.cell == state.agent) return static_cast<int>(Action::Pick);
  auto path = shortest_path(*state.maze, state.agent, t.cell);
  return path.front();
}

Trajectory sample_demonstration(const Maze& maze, Task task, const DemoConfig& demo, Rng& rng,
                                const WorldConfig& config, int env_id, int task_id) {
  if (demo.perturb_prob < 0.0 || demo.perturb_prob >= 1.0)
    throw std::invalid_argument("sample_demonstration: perturb_prob must be in [0, 1)");

  Trajectory traj;
  traj.env_id = env_id;
  traj.task_id = task_id;
  WorldState state = reset(maze, task, rng, config);
  while (!state.terminal()) {
    const int intent = expert_action(state);
    int action = intent;
    if (demo.perturb_prob > 0.0 && rng.bernoulli(demo.perturb_prob))
      action = rng.below(kNumActions);

    traj.obs.push_back(render_observation_sparse(state));
    traj.actions.push_back(static_cast<uint8_t>(demo.label_expert ? intent : action));

    StepResult sr = step(state, action);
    traj.rewards.push_back(sr.reward);
    state = std::move(sr.state);
  }
  traj.terminal_done = true;
  traj.success = state.progress == Progress::Done;
  return traj;
}

}  // namespace synpo
