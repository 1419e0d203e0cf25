// Trajectory-level identification of environments and tasks from the
// state-action representation: classification losses over the embedding
// tables through the nonlinear heads g and h, plus the argmax diagnostic.
#pragma once

#include "synpo/model.hpp"

namespace synpo {

// Per-transition negative log P(label | x_t) with the posterior normalized
// over `candidate_rows` of the environment (head 'g') or task (head 'h')
// table. `labels` index into candidate_rows, one per row of x. Output (N, 1).
// Summing per trajectory and averaging over the batch is the caller's job.
template <typename T>
Var<T> disentangle_nll(const SynPoModel<T>& model, GraphBinding<T>& bind, char head, Var<T> x,
                       const std::vector<int>& candidate_rows, const std::vector<int>& labels);

// Loss for a single trajectory's xs (each of length dis_input_dim):
// sum over t of -log P(label | x_t). Spec-level convenience used by tests
// and by embedding fine-tuning on single demos.
template <typename T>
T disentangle_loss_value(const SynPoModel<T>& model, char head,
                         const std::vector<std::vector<T>>& xs,
                         const std::vector<int>& candidate_rows, int label_row);

// argmax over candidate rows of sum_t log P(row | x_t); ties break to the
// lowest index. Pure inference.
template <typename T>
int classify_trajectory(const SynPoModel<T>& model, char head,
                        const std::vector<std::vector<T>>& xs,
                        const std::vector<int>& candidate_rows);

}  // namespace synpo
