// Optimal demonstrator: breadth-first shortest paths over the open cells,
// greedy goal selection from task progress, and epsilon-perturbed rollouts
// for behavior-cloning data.
#pragma once

#include <vector>

#include "synpo/maze.hpp"
#include "synpo/world.hpp"

namespace synpo {

struct NoPathError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Minimal-length action sequence between two open cells on the 4-connected
// grid. Ties are broken by fixed action priority: up, down, left, right.
// Throws NoPathError when the target is unreachable.
std::vector<int> shortest_path(const Maze& maze, Cell from, Cell to);

// Pick when standing on the next required treasure, otherwise the first move
// of the shortest path toward it. Errors on terminal states.
int expert_action(const WorldState& state);

struct DemoConfig {
  double perturb_prob = 0.0;   // chance of a uniformly random action per step
  bool label_expert = false;   // log the expert's intent instead of the action taken
};

// One full perturbed-expert episode. When label_expert is set, the recorded
// action labels are the planner's choices while the environment still
// executes the perturbed ones.
Trajectory sample_demonstration(const Maze& maze, Task task, const DemoConfig& demo, Rng& rng,
                                const WorldConfig& config = {}, int env_id = -1,
                                int task_id = -1);

}  // namespace synpo
