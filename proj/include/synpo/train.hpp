// Behavior-cloning training loop: per episode, roll out one perturbed expert
// demonstration on a uniformly sampled seen pair, push it to the replay
// buffer, sample a trajectory mini-batch, take one optimizer step.
#pragma once

#include <optional>
#include <string>

#include "synpo/expert.hpp"
#include "synpo/loss.hpp"
#include "synpo/model.hpp"
#include "synpo/replay.hpp"
#include "synpo/split.hpp"

namespace synpo {

struct TrainConfig {
  int episodes = 20000;
  int batch_size = 64;  // trajectories per update
  int buffer_capacity = 20000;
  double learning_rate = 1e-3;
  // Linear decay of the initial rate down to this fraction over the run;
  // 1.0 keeps it constant.
  double lr_final_fraction = 1.0;
  double weight_decay = 1e-3;
  bool decoupled_decay = true;
  uint64_t seed = 0;

  ModelVariant variant = ModelVariant::SynPo;
  int n_envs = 20;
  int n_colors = kNumColors;  // tasks enumerate ordered color pairs
  // 0 trains on every ordered pair of the palette; a smaller value restricts
  // the task table to a prefix of the enumeration (settings 2/3 pretraining).
  int n_tasks_limit = 0;
  int window_size = 3;
  int basis_k = 32;
  int embed_dim = 128;
  int state_dim = 128;
  int feature_hidden = 512;
  int coef_hidden = 512;
  int dis_hidden = 512;
  int mlp_hidden1 = 1024;
  int mlp_hidden2 = 512;

  double perturb_prob = 0.1;
  bool label_expert = false;
  LossWeights loss_weights{};
  // Cap on transitions per sampled trajectory entering the loss (0 = all).
  int max_transitions_per_traj = 0;
  // Probability that a sampled transition sees a start-like single-frame
  // window instead of its full 4-frame history.
  double history_dropout = 0.0;

  int eval_every = 0;     // episodes between evaluation snapshots (0 = never)
  int eval_combos = 100;  // sampled pair-episodes per snapshot and side
  int checkpoint_every = 0;
  // Discount factor of the underlying MDP; recorded for completeness, the
  // cloning objective does not use it.
  double gamma = 0.95;

  std::string out_dir;  // when set: metrics.csv, checkpoint, split.json

  int n_tasks() const;  // resolved task count
  ModelConfig model_config() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct MetricsRow {
  int episode = 0;
  LossValues loss;
  // Negative when no evaluation ran this episode.
  double eval_seen_sr = -1.0;
  double eval_unseen_sr = -1.0;
};

class TrainSession {
 public:
  TrainSession(const TrainConfig& config, PairSplit split);

  // Runs the remaining episodes, writing artifacts if out_dir is set.
  void run();
  // One iteration of the training loop.
  void run_episode();

  // Split-guarded buffer insertion; rejects unseen-pair trajectories.
  void push_demo(Trajectory traj);

  const ModelF& model() const { return model_; }
  ModelF& model() { return model_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const PairSplit& split() const { return split_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<MetricsRow>& metrics() const { return metrics_; }
  const std::vector<Maze>& mazes() const { return mazes_; }
  const std::vector<Task>& tasks() const { return tasks_; }
  int episode() const { return episode_; }
  WorldConfig world_config() const;

  void write_metrics_csv(const std::string& path) const;
  std::pair<double, double> snapshot_eval(int episodes_per_side) const;

 private:
  TrainConfig config_;
  PairSplit split_;
  std::vector<Maze> mazes_;
  std::vector<Task> tasks_;
  std::vector<Pair> seen_;
  ModelF model_;
  ReplayBuffer buffer_;
  AdamOptimizer<float> opt_;
  Rng pair_rng_, episode_rng_, sample_rng_, step_rng_;
  int episode_ = 0;
  std::vector<MetricsRow> metrics_;
};

}  // namespace synpo
