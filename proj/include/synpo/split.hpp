// Seen/unseen partitions of the environment x task grid and the transfer
// setting descriptions.
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "synpo/rng.hpp"

namespace synpo {

using Pair = std::pair<int, int>;  // (environment id, task id)

struct PairSplit {
  int n_envs = 0;
  int n_tasks = 0;
  uint64_t seed = 0;
  std::set<Pair> seen;

  bool is_seen(int env, int task) const { return seen.count({env, task}) > 0; }
  std::vector<Pair> seen_list() const { return {seen.begin(), seen.end()}; }
  std::vector<Pair> unseen_list() const;

  std::string to_json() const;
  static PairSplit from_json(const std::string& text);
  static PairSplit load_file(const std::string& path);
  void save_file(const std::string& path) const;
};

// Uniform random seen set of size n_seen such that every environment and
// every task appears in at least one seen pair. Errors when n_seen is
// below max(nE, nT) or above the grid size.
PairSplit make_split(int n_envs, int n_tasks, int n_seen, Rng& rng);

// Full-grid split (everything seen); phase-1 training for settings 2/3.
PairSplit full_split(int n_envs, int n_tasks);

enum class TransferSetting : int {
  SparsePairs = 1,    // unseen pairs of seen axes; no fine-tuning needed
  CrossQuadrant = 2,  // new envs x old tasks and old envs x new tasks
  NewBlock = 3,       // new envs x new tasks
};

// Target pairs whose demonstrations drive embedding fine-tuning, given a
// P-block of [0, p_envs) x [0, p_tasks) inside a full grid of
// (p_envs + q_envs) x (p_tasks + q_tasks).
std::vector<Pair> transfer_target_pairs(TransferSetting setting, int p_envs, int p_tasks,
                                        int q_envs, int q_tasks);

}  // namespace synpo
