#include "synpo/world.hpp"

#include <algorithm>
#include <stdexcept>

namespace synpo {

const char* color_name(TreasureColor c) {
  switch (c) {
    case TreasureColor::Red: return "red";
    case TreasureColor::Green: return "green";
    case TreasureColor::Blue: return "blue";
    case TreasureColor::Yellow: return "yellow";
    case TreasureColor::Purple: return "purple";
  }
  return "?";
}

std::vector<Task> enumerate_tasks(int n_colors) {
  if (n_colors < 2 || n_colors > kNumColors)
    throw std::invalid_argument("enumerate_tasks: n_colors must be in [2, 5]");
  std::vector<Task> tasks;
  for (int f = 0; f < n_colors; ++f)
    for (int s = 0; s < n_colors; ++s)
      if (f != s)
        tasks.push_back(
            {static_cast<TreasureColor>(f), static_cast<TreasureColor>(s)});
  return tasks;
}

WorldState reset(const Maze& maze, Task task, Rng& rng, const WorldConfig& config) {
  if (task.first == task.second) throw std::invalid_argument("reset: task colors must differ");
  if (config.window_size < 1 || config.window_size % 2 == 0)
    throw std::invalid_argument("reset: window_size must be odd and positive");
  const int fi = static_cast<int>(task.first), si = static_cast<int>(task.second);
  if (fi >= config.n_colors || si >= config.n_colors)
    throw std::invalid_argument("reset: task color outside the configured palette");

  auto cells = maze.open_cells();
  const int needed = config.n_colors + 1;
  if (static_cast<int>(cells.size()) < needed)
    throw std::runtime_error("reset: maze has fewer than " + std::to_string(needed) +
                             " open cells");

  auto idx = rng.sample_distinct(static_cast<int>(cells.size()), needed);
  WorldState s;
  s.maze = &maze;
  s.config = config;
  s.task = task;
  s.agent = cells[idx[0]];
  s.treasures.resize(config.n_colors);
  for (int c = 0; c < config.n_colors; ++c) s.treasures[c] = {cells[idx[c + 1]], false};
  return s;
}

StepResult step(const WorldState& state, int action) {
  if (action < 0 || action >= kNumActions)
    throw std::invalid_argument("step: action index " + std::to_string(action) +
                                " out of range [0, 5)");
  if (state.terminal()) throw std::runtime_error("step: episode already terminal");

  StepResult res;
  res.state = state;
  WorldState& s = res.state;
  const RewardConfig& rw = state.config.rewards;
  s.step_count += 1;

  if (action == static_cast<int>(Action::Pick)) {
    int on_color = -1;
    for (int c = 0; c < static_cast<int>(s.treasures.size()); ++c)
      if (!s.treasures[c].taken && s.treasures[c].cell == s.agent) on_color = c;
    if (on_color < 0) {
      // Pick on an empty cell: step cost only, no state change.
      res.reward = rw.step;
    } else if (on_color == static_cast<int>(s.next_goal())) {
      s.treasures[on_color].taken = true;
      if (s.progress == Progress::NoneCollected) {
        s.progress = Progress::FirstCollected;
        res.reward = rw.correct_pickup + rw.step;
      } else {
        s.progress = Progress::Done;
        res.reward = rw.correct_pickup + rw.task_complete_bonus + rw.step;
      }
    } else {
      s.progress = Progress::Failed;
      res.reward = rw.wrong_pickup;
    }
  } else {
    Cell target = s.agent;
    switch (static_cast<Action>(action)) {
      case Action::Up: target.row -= 1; break;
      case Action::Down: target.row += 1; break;
      case Action::Left: target.col -= 1; break;
      case Action::Right: target.col += 1; break;
      default: break;
    }
    if (!s.maze->in_bounds(target) || s.maze->wall(target)) {
      res.reward = rw.step + rw.wall_bump_extra;
      res.bumped = true;
    } else {
      s.agent = target;
      res.reward = rw.step;
    }
  }

  res.done = s.terminal();
  return res;
}

SparseObs render_observation_sparse(const WorldState& state) {
  SparseObs obs;
  const int radius = (state.config.window_size - 1) / 2;
  for (int r = state.agent.row - radius; r <= state.agent.row + radius; ++r)
    for (int c = state.agent.col - radius; c <= state.agent.col + radius; ++c) {
      if (r < 0 || r >= kGridSize || c < 0 || c >= kGridSize) continue;
      if (state.maze->wall(r, c))
        obs.cells.emplace_back(static_cast<uint16_t>((r * kGridSize + c) * kObsChannels), 1.0f);
    }
  for (int c = 0; c < static_cast<int>(state.treasures.size()); ++c) {
    const TreasureState& t = state.treasures[c];
    if (t.taken) continue;
    const uint16_t base = static_cast<uint16_t>((t.cell.row * kGridSize + t.cell.col) *
                                                kObsChannels);
    obs.cells.emplace_back(base + 1, static_cast<float>(c + 1) / kNumColors);
  }
  obs.cells.emplace_back(
      static_cast<uint16_t>((state.agent.row * kGridSize + state.agent.col) * kObsChannels + 2),
      1.0f);
  return obs;
}

Tensor<float> to_dense(const SparseObs& obs) {
  Tensor<float> t({kGridSize, kGridSize, kObsChannels});
  for (auto [idx, v] : obs.cells) t[idx] = v;
  return t;
}

Tensor<float> render_observation(const WorldState& state) {
  return to_dense(render_observation_sparse(state));
}

Tensor<float> stack(const std::vector<Tensor<float>>& history) {
  if (history.empty()) throw std::invalid_argument("stack: history is empty");
  if (history.size() > kFrameStack)
    throw std::invalid_argument("stack: at most 4 observations, got " +
                                std::to_string(history.size()));
  for (const auto& h : history)
    if (h.numel() != kObsSize)
      throw std::invalid_argument("stack: observation has wrong shape " + shape_str(h.shape()));

  Tensor<float> out({kGridSize, kGridSize, kObsChannels * kFrameStack});
  const int pad = kFrameStack - static_cast<int>(history.size());
  for (int slot = 0; slot < kFrameStack; ++slot) {
    const Tensor<float>& src = history[std::max(0, slot - pad)];
    for (int cell = 0; cell < kGridCells; ++cell)
      for (int ch = 0; ch < kObsChannels; ++ch)
        out[cell * kObsChannels * kFrameStack + slot * kObsChannels + ch] =
            src[cell * kObsChannels + ch];
  }
  return out;
}

float Trajectory::total_reward() const {
  float sum = 0;
  for (float r : rewards) sum += r;
  return sum;
}

void fill_stacked_window(const SparseObs* const window[kFrameStack], std::span<float> out) {
  if (out.size() != kStackedSize)
    throw std::invalid_argument("fill_stacked_window: output span must hold 3072 values");
  std::fill(out.begin(), out.end(), 0.0f);
  for (int slot = 0; slot < kFrameStack; ++slot) {
    for (auto [idx, v] : window[slot]->cells) {
      const int cell = idx / kObsChannels, ch = idx % kObsChannels;
      out[cell * kObsChannels * kFrameStack + slot * kObsChannels + ch] = v;
    }
  }
}

void fill_stacked_history(const std::deque<SparseObs>& history, std::span<float> out) {
  if (history.empty()) throw std::invalid_argument("fill_stacked_history: empty history");
  if (history.size() > kFrameStack)
    throw std::invalid_argument("fill_stacked_history: more than 4 observations");
  const SparseObs* window[kFrameStack];
  const int pad = kFrameStack - static_cast<int>(history.size());
  for (int slot = 0; slot < kFrameStack; ++slot)
    window[slot] = &history[static_cast<size_t>(std::max(0, slot - pad))];
  fill_stacked_window(window, out);
}

void Trajectory::fill_stacked(int t, std::span<float> out, int history_frames) const {
  if (t < 0 || t >= length()) throw std::out_of_range("Trajectory::fill_stacked: bad index");
  if (history_frames < 1 || history_frames > kFrameStack)
    throw std::invalid_argument("Trajectory::fill_stacked: history_frames must be in [1, 4]");
  const int oldest = std::max(0, t - (history_frames - 1));
  const SparseObs* window[kFrameStack];
  for (int slot = 0; slot < kFrameStack; ++slot)
    window[slot] = &obs[static_cast<size_t>(std::max(oldest, t - (kFrameStack - 1) + slot))];
  fill_stacked_window(window, out);
}

Tensor<float> Trajectory::stacked(int t) const {
  Tensor<float> out({kGridSize, kGridSize, kObsChannels * kFrameStack});
  fill_stacked(t, out.flat());
  return out;
}

EpisodeResult rollout(const Maze& maze, Task task, const PolicyFn& policy, Rng& reset_rng,
                      const WorldConfig& config, int env_id, int task_id) {
  EpisodeResult out;
  WorldState state = reset(maze, task, reset_rng, config);
  out.trajectory.env_id = env_id;
  out.trajectory.task_id = task_id;
  std::deque<SparseObs> history;

  while (!state.terminal()) {
    SparseObs obs = render_observation_sparse(state);
    history.push_back(obs);
    if (history.size() > kFrameStack) history.pop_front();

    const int action = policy(state, history);
    StepResult sr = step(state, action);

    out.trajectory.obs.push_back(std::move(obs));
    out.trajectory.actions.push_back(static_cast<uint8_t>(action));
    out.trajectory.rewards.push_back(sr.reward);
    out.total_reward += sr.reward;
    if (sr.bumped) out.wall_bumps += 1;

    state = std::move(sr.state);
  }
  out.steps = state.step_count;
  out.success = state.progress == Progress::Done;
  out.trajectory.terminal_done = true;
  out.trajectory.success = out.success;
  return out;
}

}  // namespace synpo
