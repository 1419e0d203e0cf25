// Success-rate evaluation of synthesized policies, per-pair matrices, and
// embedding-only fine-tuning for transfer to new environments and tasks:
// everything stays frozen except the newly allocated look-up rows.
#pragma once

#include <string>

#include "synpo/adam.hpp"
#include "synpo/loss.hpp"
#include "synpo/model.hpp"
#include "synpo/split.hpp"
#include "synpo/world.hpp"

namespace synpo {

// Greedy-argmax policy for one (environment, task) pair. Coefficients are
// computed once; each step stacks the latest observations and synthesizes
// action logits.
PolicyFn greedy_policy(const ModelF& model, int env_id, int task_id);

struct EvalResult {
  double avg_sr = 0.0;
  double avg_reward = 0.0;
  int episodes = 0;
};

// Runs `episodes` randomized resets with a per-episode seed stream derived
// from (seed, env_id, task_id, episode).
EvalResult evaluate(const ModelF& model, const Maze& maze, Task task, int env_id, int task_id,
                    int episodes, uint64_t seed, const WorldConfig& world);

// Same protocol for an arbitrary policy factory (expert or random baselines
// in tests).
using PolicyFactory = std::function<PolicyFn(int env_id, int task_id)>;
EvalResult evaluate_policy(const PolicyFactory& make_policy, const Maze& maze, Task task,
                           int env_id, int task_id, int episodes, uint64_t seed,
                           const WorldConfig& world);

struct SuccessMatrix {
  int n_envs = 0;
  int n_tasks = 0;
  std::vector<double> sr;      // n_tasks rows x n_envs columns
  std::vector<double> reward;  // same layout

  double& at(int task, int env) { return sr[static_cast<size_t>(task) * n_envs + env]; }
  double at(int task, int env) const { return sr[static_cast<size_t>(task) * n_envs + env]; }

  double mean_over(const std::vector<Pair>& pairs) const;

  // CSV: rows = tasks, columns = environments.
  void save_csv(const std::string& path) const;
  nlohmann::json summary(const PairSplit& split, uint64_t seed) const;
};

SuccessMatrix success_matrix(const ModelF& model, const std::vector<Maze>& mazes,
                             const std::vector<Task>& tasks, int episodes, uint64_t seed,
                             const WorldConfig& world);

struct FinetuneConfig {
  int iterations = 10000;
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  LossWeights loss_weights{};
  uint64_t seed = 0;
};

// Optimizes only the extension rows added by model.extend_embeddings against
// the combined loss over `demos` (one batch per iteration, all demos).
// Every other parameter is frozen and left byte-identical. Demos must be
// tagged with ids covered by the extended tables.
void finetune_embeddings(ModelF& model, const std::vector<Trajectory>& demos,
                         const FinetuneConfig& cfg);

}  // namespace synpo
