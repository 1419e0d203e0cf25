#include "synpo/loss.hpp"

#include <stdexcept>

#include "synpo/disentangle.hpp"

namespace synpo {

template <typename T>
LossValues LossGraph<T>::values() const {
  auto val = [](const Var<T>& v) { return v ? static_cast<double>(v->value[0]) : 0.0; };
  LossValues out;
  out.total = val(total);
  out.pi = val(pi);
  out.reward = val(reward);
  out.env = val(env);
  out.task = val(task);
  return out;
}

template <typename T>
LossGraph<T> build_loss(const SynPoModel<T>& model, std::span<const BatchItem> batch,
                        const LossWeights& weights) {
  if (batch.empty()) throw std::invalid_argument("build_loss: empty batch");
  const ModelConfig& cfg = model.cfg;
  const bool bilinear = model.is_bilinear();
  const bool want_reward = bilinear && weights.reward != 0.0;
  const bool want_env = cfg.variant != ModelVariant::Mtl && weights.env != 0.0;
  const bool want_task = weights.task != 0.0;

  int n = 0;
  for (const BatchItem& item : batch) {
    if (!item.traj) throw std::invalid_argument("build_loss: null trajectory");
    if (item.steps.empty()) throw std::invalid_argument("build_loss: trajectory with no steps");
    if (item.traj->env_id < 0 || item.traj->env_id >= cfg.total_envs() ||
        item.traj->task_id < 0 || item.traj->task_id >= cfg.total_tasks())
      throw std::invalid_argument(
          "build_loss: trajectory tagged with a pair outside the model's tables (env " +
          std::to_string(item.traj->env_id) + ", task " + std::to_string(item.traj->task_id) +
          ")");
    n += static_cast<int>(item.steps.size());
  }

  const double batch_inv = 1.0 / static_cast<double>(batch.size());

  Tensor<T> x({n, kEncoderInput});
  Tensor<T> reward_target({n, 1});
  Tensor<T> pi_weight({n, 1});
  Tensor<T> dis_weight({n, 1});
  std::vector<int> labels(n), pair_of(n), env_label(n), task_label(n);
  std::vector<int> pair_env, pair_task;
  std::map<std::pair<int, int>, int> pair_index;
  std::vector<float> scratch(kStackedSize);

  int row = 0;
  for (const BatchItem& item : batch) {
    const Trajectory& tr = *item.traj;
    auto [it, inserted] =
        pair_index.try_emplace(std::pair{tr.env_id, tr.task_id}, static_cast<int>(pair_env.size()));
    if (inserted) {
      pair_env.push_back(tr.env_id);
      pair_task.push_back(tr.task_id);
    }
    if (!item.history.empty() && item.history.size() != item.steps.size())
      throw std::invalid_argument("build_loss: history list must match steps");
    const double per_step = batch_inv / static_cast<double>(item.steps.size());
    for (size_t si = 0; si < item.steps.size(); ++si) {
      const int t = item.steps[si];
      if (t < 0 || t >= tr.length())
        throw std::out_of_range("build_loss: step index outside trajectory");
      tr.fill_stacked(t, scratch, item.history.empty() ? kFrameStack : item.history[si]);
      fill_encoder_row(scratch, x.data() + static_cast<int64_t>(row) * kEncoderInput);
      labels[row] = tr.actions[t];
      pair_of[row] = it->second;
      reward_target[row] = static_cast<T>(tr.rewards[t]);
      pi_weight[row] = static_cast<T>(per_step);
      dis_weight[row] = static_cast<T>(batch_inv);
      env_label[row] = tr.env_id;
      task_label[row] = tr.task_id;
      ++row;
    }
  }

  GraphBinding<T> bind(model.params);
  auto psi = model.features(bind, constant(std::move(x)));
  auto env_emb = model.env_rows(bind, pair_env);
  auto task_emb = model.task_rows(bind, pair_task);

  Var<T> logits, dis_input;
  Var<T> reward_node, env_node, task_node;

  if (bilinear) {
    auto [alpha, beta] = model.coefficients(bind, env_emb, task_emb);
    auto x_all = model.state_action_all(bind, psi);
    logits = model.policy_logits(bind, x_all, gather(alpha, pair_of));

    // x at the taken action, (n, K): pick column labels[r] from each (K, A)
    // block of the flattened representation.
    auto x_flat = reshape(x_all, {n * cfg.basis_k, cfg.n_actions});
    std::vector<int> cols;
    cols.reserve(static_cast<size_t>(n) * cfg.basis_k);
    for (int r = 0; r < n; ++r)
      for (int k = 0; k < cfg.basis_k; ++k) cols.push_back(labels[r]);
    auto x_sel = reshape(pick_entries(x_flat, cols), {n, cfg.basis_k});

    if (want_reward) {
      auto pred = model.reward_prediction(bind, x_sel, gather(beta, pair_of));
      reward_node =
          sum_all(mul(squared_error(pred, constant(reward_target)), constant(pi_weight)));
    }
    dis_input = weights.detach_state_action ? stop_gradient(x_sel) : x_sel;
  } else {
    logits = model.mlp_logits(bind, psi, gather(env_emb, pair_of), gather(task_emb, pair_of));
    dis_input = weights.detach_state_action ? stop_gradient(psi) : psi;
  }

  LossGraph<T> out{std::move(bind), nullptr, nullptr, nullptr, nullptr, nullptr};

  auto nll = scale(pick_entries(log_softmax(logits), labels), T(-1));
  out.pi = sum_all(mul(nll, constant(pi_weight)));

  if (want_env) {
    std::vector<int> candidates(cfg.total_envs());
    for (int i = 0; i < cfg.total_envs(); ++i) candidates[i] = i;
    auto e_nll = disentangle_nll(model, out.binding, 'g', dis_input, candidates, env_label);
    out.env = sum_all(mul(e_nll, constant(dis_weight)));
  }
  if (want_task) {
    std::vector<int> candidates(cfg.total_tasks());
    for (int i = 0; i < cfg.total_tasks(); ++i) candidates[i] = i;
    auto t_nll = disentangle_nll(model, out.binding, 'h', dis_input, candidates, task_label);
    out.task = sum_all(mul(t_nll, constant(dis_weight)));
  }
  out.reward = reward_node;

  Var<T> total = out.pi;
  if (out.reward) total = add(total, scale(out.reward, static_cast<T>(weights.reward)));
  if (out.env) total = add(total, scale(out.env, static_cast<T>(weights.env)));
  if (out.task) total = add(total, scale(out.task, static_cast<T>(weights.task)));
  out.total = total;
  return out;
}

template <typename T>
LossValues compute_loss(const SynPoModel<T>& model, std::span<const BatchItem> batch,
                        const LossWeights& weights) {
  LossGraph<T> g = build_loss(model, batch, weights);
  forward(g.total);
  return g.values();
}

template struct LossGraph<float>;
template struct LossGraph<double>;
template LossGraph<float> build_loss(const SynPoModel<float>&, std::span<const BatchItem>,
                                     const LossWeights&);
template LossGraph<double> build_loss(const SynPoModel<double>&, std::span<const BatchItem>,
                                      const LossWeights&);
template LossValues compute_loss(const SynPoModel<float>&, std::span<const BatchItem>,
                                 const LossWeights&);
template LossValues compute_loss(const SynPoModel<double>&, std::span<const BatchItem>,
                                 const LossWeights&);

}  // namespace synpo
