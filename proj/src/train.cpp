#include "synpo/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "synpo/transfer.hpp"

namespace synpo {

int TrainConfig::n_tasks() const {
  const int full = n_colors * (n_colors - 1);
  if (n_tasks_limit <= 0) return full;
  if (n_tasks_limit > full)
    throw std::invalid_argument("TrainConfig: n_tasks_limit exceeds the palette's task count");
  return n_tasks_limit;
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.variant = variant;
  m.n_envs = n_envs;
  m.n_tasks = n_tasks();
  m.n_colors = n_colors;
  m.window_size = window_size;
  m.basis_k = basis_k;
  m.embed_dim = embed_dim;
  m.state_dim = state_dim;
  m.feature_hidden = feature_hidden;
  m.coef_hidden = coef_hidden;
  m.dis_hidden = dis_hidden;
  m.mlp_hidden1 = mlp_hidden1;
  m.mlp_hidden2 = mlp_hidden2;
  return m;
}

nlohmann::json TrainConfig::to_json() const {
  return {
      {"episodes", episodes},
      {"batch_size", batch_size},
      {"buffer_capacity", buffer_capacity},
      {"learning_rate", learning_rate},
      {"lr_final_fraction", lr_final_fraction},
      {"weight_decay", weight_decay},
      {"decoupled_decay", decoupled_decay},
      {"seed", seed},
      {"variant", variant_name(variant)},
      {"n_envs", n_envs},
      {"n_colors", n_colors},
      {"n_tasks_limit", n_tasks_limit},
      {"window_size", window_size},
      {"basis_k", basis_k},
      {"embed_dim", embed_dim},
      {"state_dim", state_dim},
      {"feature_hidden", feature_hidden},
      {"coef_hidden", coef_hidden},
      {"dis_hidden", dis_hidden},
      {"mlp_hidden1", mlp_hidden1},
      {"mlp_hidden2", mlp_hidden2},
      {"perturb_prob", perturb_prob},
      {"label_expert", label_expert},
      {"lambda_reward", loss_weights.reward},
      {"lambda_env", loss_weights.env},
      {"lambda_task", loss_weights.task},
      {"detach_state_action", loss_weights.detach_state_action},
      {"max_transitions_per_traj", max_transitions_per_traj},
      {"history_dropout", history_dropout},
      {"eval_every", eval_every},
      {"eval_combos", eval_combos},
      {"checkpoint_every", checkpoint_every},
      {"gamma", gamma},
      {"out_dir", out_dir},
  };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("episodes", c.episodes);
  get("batch_size", c.batch_size);
  get("buffer_capacity", c.buffer_capacity);
  get("learning_rate", c.learning_rate);
  get("lr_final_fraction", c.lr_final_fraction);
  get("weight_decay", c.weight_decay);
  get("decoupled_decay", c.decoupled_decay);
  get("seed", c.seed);
  if (j.contains("variant")) c.variant = variant_from_name(j.at("variant"));
  get("n_envs", c.n_envs);
  get("n_colors", c.n_colors);
  get("n_tasks_limit", c.n_tasks_limit);
  get("window_size", c.window_size);
  get("basis_k", c.basis_k);
  get("embed_dim", c.embed_dim);
  get("state_dim", c.state_dim);
  get("feature_hidden", c.feature_hidden);
  get("coef_hidden", c.coef_hidden);
  get("dis_hidden", c.dis_hidden);
  get("mlp_hidden1", c.mlp_hidden1);
  get("mlp_hidden2", c.mlp_hidden2);
  get("perturb_prob", c.perturb_prob);
  get("label_expert", c.label_expert);
  get("lambda_reward", c.loss_weights.reward);
  get("lambda_env", c.loss_weights.env);
  get("lambda_task", c.loss_weights.task);
  get("detach_state_action", c.loss_weights.detach_state_action);
  get("max_transitions_per_traj", c.max_transitions_per_traj);
  get("history_dropout", c.history_dropout);
  get("eval_every", c.eval_every);
  get("eval_combos", c.eval_combos);
  get("checkpoint_every", c.checkpoint_every);
  get("gamma", c.gamma);
  get("out_dir", c.out_dir);

  const std::set<std::string> known = {
      "episodes", "batch_size", "buffer_capacity", "learning_rate", "lr_final_fraction", "weight_decay",
      "decoupled_decay", "seed", "variant", "n_envs", "n_colors", "n_tasks_limit", "window_size", "basis_k",
      "embed_dim", "state_dim", "feature_hidden", "coef_hidden", "dis_hidden", "mlp_hidden1",
      "mlp_hidden2", "perturb_prob", "label_expert", "lambda_reward", "lambda_env",
      "lambda_task", "detach_state_action", "max_transitions_per_traj", "history_dropout", "eval_every",
      "eval_combos", "checkpoint_every", "gamma", "out_dir", "n_seen", "split_file"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key))
      throw std::invalid_argument("config: unknown key \"" + key + "\"");
  return c;
}

WorldConfig TrainSession::world_config() const {
  WorldConfig w;
  w.n_colors = config_.n_colors;
  w.window_size = config_.window_size;
  return w;
}

TrainSession::TrainSession(const TrainConfig& config, PairSplit split)
    : config_(config),
      split_(std::move(split)),
      buffer_(std::max(1, config.buffer_capacity)),
      opt_(AdamConfig{.learning_rate = config.learning_rate,
                      .weight_decay = config.weight_decay,
                      .decoupled_decay = config.decoupled_decay}),
      pair_rng_(derive_seed({config.seed, 0x70616972ULL})),
      episode_rng_(derive_seed({config.seed, 0x6570ULL})),
      sample_rng_(derive_seed({config.seed, 0x73616d70ULL})),
      step_rng_(derive_seed({config.seed, 0x73746570ULL})) {
  if (split_.n_envs != config.n_envs || split_.n_tasks != config.n_tasks())
    throw std::invalid_argument("TrainSession: split dimensions do not match the config");
  if (split_.seen.empty()) throw std::invalid_argument("TrainSession: split has no seen pairs");
  seen_ = split_.seen_list();
  for (int e = 0; e < config.n_envs; ++e) mazes_.push_back(fixture_maze(e));
  tasks_ = enumerate_tasks(config.n_colors);
  tasks_.resize(config.n_tasks());
  Rng init_rng(derive_seed({config.seed, 0x696e6974ULL}));
  model_ = ModelF::init(config.model_config(), init_rng);
}

void TrainSession::push_demo(Trajectory traj) {
  if (!split_.is_seen(traj.env_id, traj.task_id))
    throw std::invalid_argument("push_demo: trajectory from unseen pair (" +
                                std::to_string(traj.env_id) + ", " +
                                std::to_string(traj.task_id) + ")");
  buffer_.push(std::move(traj));
}

void TrainSession::run_episode() {
  episode_ += 1;
  if (config_.lr_final_fraction < 1.0 && config_.episodes > 1) {
    const double frac = static_cast<double>(episode_ - 1) / (config_.episodes - 1);
    const double scale = 1.0 - (1.0 - config_.lr_final_fraction) * std::min(1.0, frac);
    opt_.set_learning_rate(config_.learning_rate * scale);
  }

  const Pair z = seen_[pair_rng_.below(static_cast<int>(seen_.size()))];
  Rng demo_rng(derive_seed({config_.seed, 0x64656d6fULL, static_cast<uint64_t>(episode_)}));
  DemoConfig demo;
  demo.perturb_prob = config_.perturb_prob;
  demo.label_expert = config_.label_expert;
  push_demo(sample_demonstration(mazes_[z.first], tasks_[z.second], demo, demo_rng,
                                 world_config(), z.first, z.second));

  auto batch_ptrs = buffer_.sample(config_.batch_size, sample_rng_);
  std::vector<BatchItem> batch;
  batch.reserve(batch_ptrs.size());
  for (const Trajectory* t : batch_ptrs) {
    const int cap = config_.max_transitions_per_traj;
    BatchItem item;
    if (cap <= 0 || t->length() <= cap) {
      item = BatchItem::all(*t);
    } else {
      item.traj = t;
      auto picked = step_rng_.sample_distinct(t->length(), cap);
      std::sort(picked.begin(), picked.end());
      item.steps = std::move(picked);
    }
    if (config_.history_dropout > 0.0) {
      item.history.assign(item.steps.size(), kFrameStack);
      for (size_t i = 0; i < item.steps.size(); ++i)
        if (step_rng_.bernoulli(config_.history_dropout)) item.history[i] = 1;
    }
    batch.push_back(std::move(item));
  }

  LossGraph<float> graph = build_loss(model_, batch, config_.loss_weights);
  forward(graph.total);
  backward(graph.total);
  opt_.step(model_.params, graph.binding.grads());

  MetricsRow rowm;
  rowm.episode = episode_;
  rowm.loss = graph.values();
  if (config_.eval_every > 0 && episode_ % config_.eval_every == 0) {
    auto [seen_sr, unseen_sr] = snapshot_eval(config_.eval_combos);
    rowm.eval_seen_sr = seen_sr;
    rowm.eval_unseen_sr = unseen_sr;
  }
  metrics_.push_back(rowm);

  if (!config_.out_dir.empty() && config_.checkpoint_every > 0 &&
      episode_ % config_.checkpoint_every == 0)
    model_.save(config_.out_dir + "/checkpoint_" + std::to_string(episode_));
}

// One episode per sampled combination on each side, seeded by the episode
// index so snapshots are reproducible.
std::pair<double, double> TrainSession::snapshot_eval(int per_side) const {
  auto side_sr = [&](const std::vector<Pair>& pairs) {
    if (pairs.empty() || per_side <= 0) return -1.0;
    Rng rng(derive_seed({config_.seed, 0x6576616cULL, static_cast<uint64_t>(episode_)}));
    int successes = 0;
    for (int i = 0; i < per_side; ++i) {
      const Pair z = pairs[rng.below(static_cast<int>(pairs.size()))];
      PolicyFn policy = greedy_policy(model_, z.first, z.second);
      Rng ep_rng(derive_seed({config_.seed, 0x6576ULL, static_cast<uint64_t>(episode_),
                              static_cast<uint64_t>(z.first), static_cast<uint64_t>(z.second),
                              static_cast<uint64_t>(i)}));
      EpisodeResult r =
          rollout(mazes_[z.first], tasks_[z.second], policy, ep_rng, world_config(), z.first,
                  z.second);
      successes += r.success ? 1 : 0;
    }
    return static_cast<double>(successes) / per_side;
  };
  return {side_sr(seen_), side_sr(split_.unseen_list())};
}

void TrainSession::write_metrics_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics: " + path);
  out << "episode,loss_total,loss_pi,loss_r,loss_env,loss_task,eval_seen_sr,eval_unseen_sr\n";
  for (const MetricsRow& r : metrics_) {
    out << r.episode << "," << r.loss.total << "," << r.loss.pi << "," << r.loss.reward << ","
        << r.loss.env << "," << r.loss.task << ",";
    if (r.eval_seen_sr >= 0) out << r.eval_seen_sr;
    out << ",";
    if (r.eval_unseen_sr >= 0) out << r.eval_unseen_sr;
    out << "\n";
  }
}

void TrainSession::run() {
  if (!config_.out_dir.empty()) std::filesystem::create_directories(config_.out_dir);
  while (episode_ < config_.episodes) run_episode();
  if (!config_.out_dir.empty()) {
    model_.save(config_.out_dir + "/checkpoint");
    write_metrics_csv(config_.out_dir + "/metrics.csv");
    split_.save_file(config_.out_dir + "/split.json");
  }
}

}  // namespace synpo
