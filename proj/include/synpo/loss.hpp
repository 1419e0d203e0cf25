// Combined behavior-cloning objective over a batch of trajectories:
// cross-entropy on demonstrated actions, squared error on recorded rewards,
// and the two disentanglement terms, each weighted per configuration.
#pragma once

#include <span>

#include "synpo/model.hpp"

namespace synpo {

struct LossWeights {
  double reward = 0.01;  // lambda_1
  double env = 0.1;      // lambda_2
  double task = 0.001;   // lambda_3
  // Block disentanglement gradients from reaching the basis and features.
  bool detach_state_action = false;
};

// A trajectory with the transitions participating in the loss. Training may
// subsample long trajectories; `all` keeps every transition.
struct BatchItem {
  const Trajectory* traj = nullptr;
  std::vector<int> steps;
  // Optional per-step history window (1..4); empty = full windows. Training
  // may shorten windows on some samples so the policy cannot lean on motion
  // features alone.
  std::vector<int> history;

  static BatchItem all(const Trajectory& t) {
    BatchItem b{&t, {}, {}};
    b.steps.resize(t.length());
    for (int i = 0; i < t.length(); ++i) b.steps[i] = i;
    return b;
  }
};

struct LossValues {
  double total = 0, pi = 0, reward = 0, env = 0, task = 0;
};

// The assembled graph. Component reductions: the policy and reward terms are
// means over transitions within a trajectory then means over the batch; the
// disentanglement terms are per-trajectory sums averaged over the batch.
template <typename T>
struct LossGraph {
  GraphBinding<T> binding;
  Var<T> total, pi, reward, env, task;  // reward/env/task null when skipped

  LossValues values() const;
};

// Builds the loss over `batch`. Zero-weight components are skipped entirely
// (their subgraph is not built); the MTL variant drops the environment term,
// the MLP baseline has no reward head.
template <typename T>
LossGraph<T> build_loss(const SynPoModel<T>& model, std::span<const BatchItem> batch,
                        const LossWeights& weights);

// Forward-only convenience.
template <typename T>
LossValues compute_loss(const SynPoModel<T>& model, std::span<const BatchItem> batch,
                        const LossWeights& weights);

}  // namespace synpo
