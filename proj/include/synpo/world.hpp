// Treasure-hunt simulator on top of Maze: ordered two-color pick-up tasks,
// reward accounting, egocentric observation rendering, and frame stacking.
// WorldState is a value; step() returns the updated state.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "synpo/maze.hpp"
#include "synpo/rng.hpp"
#include "synpo/tensor.hpp"

namespace synpo {

enum class TreasureColor : int { Red = 0, Green = 1, Blue = 2, Yellow = 3, Purple = 4 };
inline constexpr int kNumColors = 5;

const char* color_name(TreasureColor c);

// "Pick up <first>, then pick up <second>".
struct Task {
  TreasureColor first{};
  TreasureColor second{};
  bool operator==(const Task&) const = default;
};

// All ordered pairs of distinct colors among the first n_colors; n_colors
// in [2, 5]. Five colors give the standard set of twenty tasks.
std::vector<Task> enumerate_tasks(int n_colors);

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3, Pick = 4 };
inline constexpr int kNumActions = 5;

enum class Progress : int { NoneCollected, FirstCollected, Done, Failed };

struct RewardConfig {
  float step = -0.01f;
  float wall_bump_extra = -0.01f;
  float correct_pickup = 1.0f;
  float task_complete_bonus = 10.0f;
  float wrong_pickup = -10.0f;
  int max_steps = 300;
};

struct WorldConfig {
  int n_colors = kNumColors;  // treasures in play; tasks enumerate over these
  int window_size = 3;        // odd; 1 = blind agent (no layout visible)
  RewardConfig rewards{};
};

struct TreasureState {
  Cell cell{};
  bool taken = false;
};

struct WorldState {
  const Maze* maze = nullptr;
  WorldConfig config{};
  Task task{};
  Cell agent{};
  std::vector<TreasureState> treasures;  // indexed by color
  Progress progress = Progress::NoneCollected;
  int step_count = 0;

  bool terminal() const {
    return progress == Progress::Done || progress == Progress::Failed ||
           step_count >= config.rewards.max_steps;
  }
  TreasureColor next_goal() const {
    return progress == Progress::NoneCollected ? task.first : task.second;
  }
};

struct StepResult {
  WorldState state;
  float reward = 0.0f;
  bool done = false;
  bool bumped = false;
};

// Agent plus one treasure per active color, uniform over distinct open cells.
WorldState reset(const Maze& maze, Task task, Rng& rng, const WorldConfig& config = {});

// Applies one action. Errors on out-of-range actions or terminal states.
StepResult step(const WorldState& state, int action);

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

inline constexpr int kObsChannels = 3;
inline constexpr int kObsSize = kGridCells * kObsChannels;  // 16 x 16 x 3
inline constexpr int kFrameStack = 4;
inline constexpr int kStackedSize = kObsSize * kFrameStack;  // 16 x 16 x 12

// Channel 0: walls inside the agent's window. Channel 1: un-taken treasures,
// value (color+1)/5. Channel 2: the agent. Layout is row-major with the
// channel fastest: index = (row * 16 + col) * 3 + channel.
Tensor<float> render_observation(const WorldState& state);

// Same content as render_observation, as a sparse (index, value) list; a
// rendered observation has at most ~15 non-zero cells of 768.
struct SparseObs {
  std::vector<std::pair<uint16_t, float>> cells;
};
SparseObs render_observation_sparse(const WorldState& state);

Tensor<float> to_dense(const SparseObs& obs);

// Writes the 3072-value stacked state for a window of four observation
// pointers (oldest first; repeat the oldest to front-pad).
void fill_stacked_window(const SparseObs* const window[kFrameStack], std::span<float> out);

// Stacks the most recent <= 4 observations of a rolling history
// (most recent last), front-padded with the oldest entry.
void fill_stacked_history(const std::deque<SparseObs>& history, std::span<float> out);

// Channel-concatenates the last <= 4 observations, oldest first, front-padded
// by replicating the oldest. Errors on empty or more than 4 entries.
// Stacked layout: index = (row * 16 + col) * 12 + slot * 3 + channel.
Tensor<float> stack(const std::vector<Tensor<float>>& history);

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

// One episode of (stacked observation, action, reward) transitions, tagged
// with its (environment, task) pair. Observations are stored sparsely;
// stacked inputs are materialized on demand.
struct Trajectory {
  int env_id = -1;
  int task_id = -1;
  std::vector<SparseObs> obs;     // obs[t] precedes actions[t]
  std::vector<uint8_t> actions;   // in [0, 5)
  std::vector<float> rewards;
  bool terminal_done = false;     // episode ended (success, failure or cap)
  bool success = false;           // progress reached Done

  int length() const { return static_cast<int>(actions.size()); }
  bool done_flag(int t) const { return terminal_done && t == length() - 1; }
  float total_reward() const;

  // Writes the 3072-value stacked state for transition t into out.
  // history_frames < 4 clamps the window (1 replicates the current
  // observation, the way an episode start looks).
  void fill_stacked(int t, std::span<float> out, int history_frames = kFrameStack) const;
  Tensor<float> stacked(int t) const;
};

// Episode-level rollout driver. The policy sees the current state and the
// window of observations ending at the current step (most recent last).
using PolicyFn =
    std::function<int(const WorldState& state, const std::deque<SparseObs>& history)>;

struct EpisodeResult {
  Trajectory trajectory;
  float total_reward = 0.0f;
  bool success = false;
  int steps = 0;
  int wall_bumps = 0;
};

EpisodeResult rollout(const Maze& maze, Task task, const PolicyFn& policy, Rng& reset_rng,
                      const WorldConfig& config = {}, int env_id = -1, int task_id = -1);

}  // namespace synpo
