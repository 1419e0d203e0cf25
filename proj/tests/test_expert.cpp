#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <queue>

#include "synpo/expert.hpp"
#include "synpo/maze.hpp"
#include "synpo/rng.hpp"
#include "synpo/world.hpp"

using namespace synpo;

namespace {

// Independent oracle: Dijkstra with a priority queue over unit-weight edges.
// Kept deliberately separate from the BFS planner it checks.
int dijkstra_distance(const Maze& m, Cell from, Cell to) {
  std::vector<int> dist(kGridCells, std::numeric_limits<int>::max());
  using Item = std::pair<int, int>;  // (distance, cell index)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  const int src = from.row * kGridSize + from.col;
  dist[src] = 0;
  pq.push({0, src});
  while (!pq.empty()) {
    auto [d, idx] = pq.top();
    pq.pop();
    if (d > dist[idx]) continue;
    const int r = idx / kGridSize, c = idx % kGridSize;
    const int nbrs[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
    for (auto [nr, nc] : nbrs) {
      if (nr < 0 || nr >= kGridSize || nc < 0 || nc >= kGridSize) continue;
      if (m.wall(nr, nc)) continue;
      const int nidx = nr * kGridSize + nc;
      if (d + 1 < dist[nidx]) {
        dist[nidx] = d + 1;
        pq.push({d + 1, nidx});
      }
    }
  }
  return dist[to.row * kGridSize + to.col];
}

Cell apply(Cell c, int action) {
  switch (static_cast<Action>(action)) {
    case Action::Up: return {c.row - 1, c.col};
    case Action::Down: return {c.row + 1, c.col};
    case Action::Left: return {c.row, c.col - 1};
    case Action::Right: return {c.row, c.col + 1};
    default: return c;
  }
}

}  // namespace

TEST_CASE("shortest_path: identity and unit step") {
  Maze m = fixture_maze(0);
  const auto open = m.open_cells();
  CHECK(shortest_path(m, open[0], open[0]).empty());

  for (const Cell& c : open) {
    const Cell right{c.row, c.col + 1};
    if (m.in_bounds(right) && m.open(right)) {
      auto path = shortest_path(m, c, right);
      REQUIRE(path.size() == 1);
      CHECK(path[0] == static_cast<int>(Action::Right));
      break;
    }
  }
}

TEST_CASE("shortest_path rejects wall endpoints") {
  Maze m = fixture_maze(0);
  CHECK_THROWS_AS(shortest_path(m, {0, 0}, {1, 1}), std::invalid_argument);
}

TEST_CASE("shortest_path reports unreachable targets") {
  Maze m;  // all walls
  m.set_wall(1, 1, false);
  m.set_wall(3, 3, false);
  CHECK_THROWS_AS(shortest_path(m, {1, 1}, {3, 3}), NoPathError);
}

TEST_CASE("shortest_path matches the Dijkstra oracle on 100 random triples") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    Maze m = fixture_maze(rng.below(20));
    const auto open = m.open_cells();
    const Cell from = open[rng.below(static_cast<int>(open.size()))];
    const Cell to = open[rng.below(static_cast<int>(open.size()))];

    auto path = shortest_path(m, from, to);
    CHECK(static_cast<int>(path.size()) == dijkstra_distance(m, from, to));

    // The path must be executable: every move lands on an open cell and ends
    // at the target.
    Cell cur = from;
    for (int a : path) {
      cur = apply(cur, a);
      CHECK(m.open(cur));
    }
    CHECK(cur == to);
  }
}

TEST_CASE("shortest_path tie-breaking is deterministic") {
  Maze m = fixture_maze(2);
  const auto open = m.open_cells();
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const Cell a = open[rng.below(static_cast<int>(open.size()))];
    const Cell b = open[rng.below(static_cast<int>(open.size()))];
    CHECK(shortest_path(m, a, b) == shortest_path(m, a, b));
  }
}

TEST_CASE("expert_action: pick when standing on the goal, plan otherwise") {
  Maze m = fixture_maze(0);
  Rng rng(11);
  WorldState s = reset(m, {TreasureColor::Red, TreasureColor::Blue}, rng);

  WorldState on_goal = s;
  on_goal.agent = on_goal.treasures[static_cast<int>(TreasureColor::Red)].cell;
  CHECK(expert_action(on_goal) == static_cast<int>(Action::Pick));

  // After the first pickup the planner heads for the second color.
  StepResult taken = step(on_goal, static_cast<int>(Action::Pick));
  REQUIRE(taken.state.progress == Progress::FirstCollected);
  const Cell goal2 = taken.state.treasures[static_cast<int>(TreasureColor::Blue)].cell;
  WorldState s2 = taken.state;
  const int a = expert_action(s2);
  if (s2.agent == goal2) {
    CHECK(a == static_cast<int>(Action::Pick));
  } else {
    const int before = dijkstra_distance(m, s2.agent, goal2);
    const int after = dijkstra_distance(m, apply(s2.agent, a), goal2);
    CHECK(after == before - 1);
  }

  WorldState terminal = s;
  terminal.progress = Progress::Done;
  CHECK_THROWS_AS(expert_action(terminal), std::runtime_error);
}

TEST_CASE("unperturbed expert succeeds on every pair, within the step cap") {
  // 5 mazes x 6 tasks, 200 episodes total spread across the grid.
  const auto tasks = enumerate_tasks(3);
  WorldConfig cfg;
  cfg.n_colors = 3;
  int episodes = 0;
  for (int e = 0; e < 5; ++e) {
    Maze m = fixture_maze(e);
    for (int t = 0; t < static_cast<int>(tasks.size()); ++t) {
      for (int round = 0; round < 7; ++round) {
        Rng rng(derive_seed({17, static_cast<uint64_t>(e), static_cast<uint64_t>(t),
                             static_cast<uint64_t>(round)}));
        DemoConfig demo;  // perturb_prob = 0
        Trajectory traj = sample_demonstration(m, tasks[t], demo, rng, cfg, e, t);
        CHECK(traj.success);
        CHECK(traj.length() <= 300);
        ++episodes;
      }
    }
  }
  CHECK(episodes >= 200);
}

TEST_CASE("pure expert trajectories match the closed-form return") {
  Maze m = fixture_maze(3);
  WorldConfig cfg;
  Rng rng(23);
  DemoConfig demo;
  Trajectory traj =
      sample_demonstration(m, {TreasureColor::Yellow, TreasureColor::Red}, demo, rng, cfg, 3, 0);
  REQUIRE(traj.success);
  // The expert never bumps a wall: total = -0.01 * steps + 1 + 1 + 10.
  const float expect = -0.01f * traj.length() + 12.0f;
  CHECK(traj.total_reward() == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("expert never picks a wrong treasure over many rollouts") {
  Rng rng(29);
  const auto tasks = enumerate_tasks(5);
  for (int trial = 0; trial < 50; ++trial) {
    Maze m = fixture_maze(rng.below(20));
    const Task task = tasks[rng.below(static_cast<int>(tasks.size()))];
    Rng ep(derive_seed({31, static_cast<uint64_t>(trial)}));
    DemoConfig demo;
    Trajectory traj = sample_demonstration(m, task, demo, ep);
    CHECK(traj.success);
    for (float r : traj.rewards) CHECK(r > -5.0f);  // no -10 wrong-pick anywhere
  }
}

TEST_CASE("demonstrations are deterministic given the rng seed") {
  Maze m = fixture_maze(1);
  DemoConfig demo;
  demo.perturb_prob = 0.2;
  Rng a(77), b(77);
  Trajectory ta = sample_demonstration(m, {TreasureColor::Red, TreasureColor::Green}, demo, a);
  Trajectory tb = sample_demonstration(m, {TreasureColor::Red, TreasureColor::Green}, demo, b);
  CHECK(ta.actions == tb.actions);
  CHECK(ta.rewards == tb.rewards);
}

TEST_CASE("perturbation rate matches the configured probability") {
  Maze m = fixture_maze(0);
  DemoConfig demo;
  demo.perturb_prob = 0.1;
  demo.label_expert = true;  // labels carry the intent; divergence marks perturbed steps

  // A perturbed step executes a uniformly random action, which coincides
  // with the expert intent 1/5 of the time; observed divergence rate is
  // p * 4/5.
  int divergent = 0, total = 0;
  Rng rng(37);
  for (int ep = 0; ep < 500; ++ep) {
    Rng ep_rng(derive_seed({41, static_cast<uint64_t>(ep)}));
    // Re-simulate to recover the executed action from rewards is brittle;
    // instead record a parallel taken-label trajectory with the same seed.
    Rng ep_rng2(derive_seed({41, static_cast<uint64_t>(ep)}));
    DemoConfig taken = demo;
    taken.label_expert = false;
    Trajectory intent = sample_demonstration(m, {TreasureColor::Blue, TreasureColor::Red}, demo,
                                             ep_rng);
    Trajectory executed = sample_demonstration(m, {TreasureColor::Blue, TreasureColor::Red},
                                               taken, ep_rng2);
    REQUIRE(intent.length() == executed.length());
    for (int t = 0; t < intent.length(); ++t) {
      divergent += intent.actions[t] != executed.actions[t];
      ++total;
    }
  }
  const double p_div = 0.1 * 0.8;
  const double sigma = std::sqrt(total * p_div * (1 - p_div));
  CHECK(std::abs(divergent - total * p_div) < 3 * sigma);
}

TEST_CASE("perturb_prob outside [0, 1) is rejected") {
  Maze m = fixture_maze(0);
  Rng rng(1);
  DemoConfig demo;
  demo.perturb_prob = 1.0;
  CHECK_THROWS_AS(sample_demonstration(m, {TreasureColor::Red, TreasureColor::Blue}, demo, rng),
                  std::invalid_argument);
}
