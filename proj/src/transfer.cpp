#include "synpo/transfer.hpp"

#include <cmath>
#include <fstream>

namespace synpo {

PolicyFn greedy_policy(const ModelF& model, int env_id, int task_id) {
  auto [alpha, beta] = model.infer_coefficients(env_id, task_id);
  const bool bilinear = model.is_bilinear();
  return [&model, env_id, task_id, alpha = std::move(alpha),
          bilinear](const WorldState&, const std::deque<SparseObs>& history) {
    std::vector<float> stacked(kStackedSize);
    fill_stacked_history(history, stacked);
    auto psi = model.infer_features(stacked);
    std::vector<float> logits;
    if (bilinear) {
      auto x = model.infer_state_action_all(psi);
      logits = model.infer_policy_logits(x, alpha);
    } else {
      logits = model.infer_mlp_logits(psi, env_id, task_id);
    }
    return argmax_action<float>(logits);
  };
}

EvalResult evaluate_policy(const PolicyFactory& make_policy, const Maze& maze, Task task,
                           int env_id, int task_id, int episodes, uint64_t seed,
                           const WorldConfig& world) {
  if (episodes <= 0) throw std::invalid_argument("evaluate: episodes must be positive");
  EvalResult out;
  out.episodes = episodes;
  PolicyFn policy = make_policy(env_id, task_id);
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng(derive_seed({seed, static_cast<uint64_t>(env_id), static_cast<uint64_t>(task_id),
                         static_cast<uint64_t>(ep)}));
    EpisodeResult r = rollout(maze, task, policy, rng, world, env_id, task_id);
    out.avg_sr += r.success ? 1.0 : 0.0;
    out.avg_reward += r.total_reward;
  }
  out.avg_sr /= episodes;
  out.avg_reward /= episodes;
  return out;
}

EvalResult evaluate(const ModelF& model, const Maze& maze, Task task, int env_id, int task_id,
                    int episodes, uint64_t seed, const WorldConfig& world) {
  return evaluate_policy(
      [&model](int e, int t) { return greedy_policy(model, e, t); }, maze, task, env_id,
      task_id, episodes, seed, world);
}

double SuccessMatrix::mean_over(const std::vector<Pair>& pairs) const {
  if (pairs.empty()) return 0.0;
  double sum = 0;
  for (const auto& [e, t] : pairs) sum += at(t, e);
  return sum / static_cast<double>(pairs.size());
}

void SuccessMatrix::save_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write matrix: " + path);
  out << "task";
  for (int e = 0; e < n_envs; ++e) out << ",env_" << e;
  out << "\n";
  for (int t = 0; t < n_tasks; ++t) {
    out << t;
    for (int e = 0; e < n_envs; ++e) out << "," << at(t, e);
    out << "\n";
  }
}

nlohmann::json SuccessMatrix::summary(const PairSplit& split, uint64_t seed) const {
  nlohmann::json per_pair = nlohmann::json::array();
  for (int t = 0; t < n_tasks; ++t)
    for (int e = 0; e < n_envs; ++e)
      per_pair.push_back({{"env", e},
                          {"task", t},
                          {"sr", at(t, e)},
                          {"avg_reward", reward[static_cast<size_t>(t) * n_envs + e]},
                          {"seen", split.is_seen(e, t)}});
  return {
      {"seen_avg_sr", mean_over(split.seen_list())},
      {"unseen_avg_sr", mean_over(split.unseen_list())},
      {"per_pair", std::move(per_pair)},
      {"split", nlohmann::json::parse(split.to_json())},
      {"seeds", {{"eval", seed}}},
  };
}

SuccessMatrix success_matrix(const ModelF& model, const std::vector<Maze>& mazes,
                             const std::vector<Task>& tasks, int episodes, uint64_t seed,
                             const WorldConfig& world) {
  SuccessMatrix m;
  m.n_envs = static_cast<int>(mazes.size());
  m.n_tasks = static_cast<int>(tasks.size());
  m.sr.assign(static_cast<size_t>(m.n_envs) * m.n_tasks, 0.0);
  m.reward.assign(m.sr.size(), 0.0);
  for (int t = 0; t < m.n_tasks; ++t)
    for (int e = 0; e < m.n_envs; ++e) {
      EvalResult r = evaluate(model, mazes[e], tasks[t], e, t, episodes, seed, world);
      m.at(t, e) = r.avg_sr;
      m.reward[static_cast<size_t>(t) * m.n_envs + e] = r.avg_reward;
    }
  return m;
}

void finetune_embeddings(ModelF& model, const std::vector<Trajectory>& demos,
                         const FinetuneConfig& cfg) {
  if (!model.is_bilinear())
    throw std::invalid_argument("finetune_embeddings: requires a bilinear (synpo/mtl) model");
  if (cfg.iterations < 0)
    throw std::invalid_argument("finetune_embeddings: negative iteration count");
  if (model.cfg.env_ext_rows == 0 && model.cfg.task_ext_rows == 0)
    throw std::runtime_error(
        "finetune_embeddings: extend_embeddings must allocate new rows first");
  if (demos.empty()) throw std::invalid_argument("finetune_embeddings: no demonstrations");
  const ModelConfig& mc = model.cfg;
  for (const Trajectory& d : demos)
    if (d.env_id < 0 || d.env_id >= mc.total_envs() || d.task_id < 0 ||
        d.task_id >= mc.total_tasks())
      throw std::invalid_argument(
          "finetune_embeddings: demonstration tagged with a pair lacking an embedding row");
  if (cfg.iterations == 0) return;

  // Snapshot trainability, then freeze everything except the new rows.
  std::map<std::string, bool> saved_flags;
  for (const auto& name : model.params.names()) {
    saved_flags[name] = model.params.trainable(name);
    model.params.set_trainable(
        name, name == "embed.env_ext" || name == "embed.task_ext");
  }

  const int K = mc.basis_k, A = mc.n_actions, d_e = mc.embed_dim;
  int n = 0;
  for (const Trajectory& d : demos) n += d.length();

  // With the feature extractor, basis and heads frozen, the per-transition
  // state-action representations and head projections are constants; compute
  // them once so each iteration only runs the coefficient networks and the
  // table products.
  Tensor<float> x_all({n, K, A}), x_sel({n, K});
  Tensor<float> proj_g({n, d_e}), proj_h({n, d_e});
  Tensor<float> reward_target({n, 1}), pi_weight({n, 1}), dis_weight({n, 1});
  std::vector<int> labels(n), pair_of(n), env_label(n), task_label(n);
  std::vector<int> pair_env, pair_task;
  std::map<std::pair<int, int>, int> pair_index;

  const double batch_inv = 1.0 / static_cast<double>(demos.size());
  std::vector<float> scratch(kStackedSize);
  int row = 0;
  for (const Trajectory& d : demos) {
    auto [it, inserted] =
        pair_index.try_emplace(std::pair{d.env_id, d.task_id},
                               static_cast<int>(pair_env.size()));
    if (inserted) {
      pair_env.push_back(d.env_id);
      pair_task.push_back(d.task_id);
    }
    const double per_step = batch_inv / static_cast<double>(d.length());
    for (int t = 0; t < d.length(); ++t, ++row) {
      d.fill_stacked(t, scratch);
      auto psi = model.infer_features(scratch);
      auto x = model.infer_state_action_all(psi);
      std::copy(x.begin(), x.end(), x_all.data() + static_cast<int64_t>(row) * K * A);
      const int a = d.actions[t];
      std::vector<float> xs(K);
      for (int k = 0; k < K; ++k) xs[k] = x[static_cast<size_t>(k) * A + a];
      std::copy(xs.begin(), xs.end(), x_sel.data() + static_cast<int64_t>(row) * K);
      std::vector<float> hid, proj;
      model.infer_linear("dis.g.l1", xs, hid, true);
      model.infer_linear("dis.g.l2", hid, proj, false);
      std::copy(proj.begin(), proj.end(), proj_g.data() + static_cast<int64_t>(row) * d_e);
      model.infer_linear("dis.h.l1", xs, hid, true);
      model.infer_linear("dis.h.l2", hid, proj, false);
      std::copy(proj.begin(), proj.end(), proj_h.data() + static_cast<int64_t>(row) * d_e);

      labels[row] = a;
      pair_of[row] = it->second;
      reward_target[row] = d.rewards[t];
      pi_weight[row] = static_cast<float>(per_step);
      dis_weight[row] = static_cast<float>(batch_inv);
      env_label[row] = d.env_id;
      task_label[row] = d.task_id;
    }
  }

  // One graph, re-evaluated every iteration; leaf references pick up the
  // updated embedding rows.
  GraphBinding<float> bind(model.params);
  auto [alpha, beta] = model.coefficients(bind, model.env_rows(bind, pair_env),
                                          model.task_rows(bind, pair_task));
  auto logits = model.policy_logits(bind, constant(x_all), gather(alpha, pair_of));
  auto nll = scale(pick_entries(log_softmax(logits), labels), -1.0f);
  Var<float> total = sum_all(mul(nll, constant(pi_weight)));

  if (cfg.loss_weights.reward != 0.0) {
    auto pred = model.reward_prediction(bind, constant(x_sel), gather(beta, pair_of));
    auto r = sum_all(mul(squared_error(pred, constant(reward_target)), constant(pi_weight)));
    total = add(total, scale(r, static_cast<float>(cfg.loss_weights.reward)));
  }
  auto table_scores = [&](const char* base, const char* ext, int ext_rows,
                          const Tensor<float>& proj) {
    Var<float> table = bind(base);
    if (ext_rows > 0) table = concat<float>({table, bind(ext)}, 0);
    return matmul(constant(proj), table, /*trans_b=*/true);
  };
  if (mc.variant != ModelVariant::Mtl && cfg.loss_weights.env != 0.0) {
    auto scores = table_scores("embed.env", "embed.env_ext", mc.env_ext_rows, proj_g);
    auto e_nll = scale(pick_entries(log_softmax(scores), env_label), -1.0f);
    auto e = sum_all(mul(e_nll, constant(dis_weight)));
    total = add(total, scale(e, static_cast<float>(cfg.loss_weights.env)));
  }
  if (cfg.loss_weights.task != 0.0) {
    auto scores = table_scores("embed.task", "embed.task_ext", mc.task_ext_rows, proj_h);
    auto t_nll = scale(pick_entries(log_softmax(scores), task_label), -1.0f);
    auto t = sum_all(mul(t_nll, constant(dis_weight)));
    total = add(total, scale(t, static_cast<float>(cfg.loss_weights.task)));
  }

  AdamOptimizer<float> opt(AdamConfig{.learning_rate = cfg.learning_rate,
                                      .weight_decay = cfg.weight_decay,
                                      .decoupled_decay = true});
  for (int it = 0; it < cfg.iterations; ++it) {
    forward(total);
    backward(total);
    opt.step(model.params, bind.grads());
  }

  for (const auto& [name, flag] : saved_flags) model.params.set_trainable(name, flag);
}

}  // namespace synpo
