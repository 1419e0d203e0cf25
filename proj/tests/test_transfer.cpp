#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "synpo/expert.hpp"
#include "synpo/train.hpp"
#include "synpo/transfer.hpp"

using namespace synpo;

namespace {

PolicyFactory expert_factory() {
  return [](int, int) {
    return [](const WorldState& s, const std::deque<SparseObs>&) { return expert_action(s); };
  };
}

std::map<std::string, std::vector<float>> snapshot_params(const ModelF& m,
                                                          bool skip_ext = false) {
  std::map<std::string, std::vector<float>> out;
  for (const auto& name : m.params.names()) {
    if (skip_ext && (name == "embed.env_ext" || name == "embed.task_ext")) continue;
    const auto& t = m.params.get(name);
    out[name] = std::vector<float>(t.flat().begin(), t.flat().end());
  }
  return out;
}

}  // namespace

TEST_CASE("make_split: coverage, determinism, edge cases") {
  Rng rng(1);
  PairSplit s = make_split(20, 20, 144, rng);
  CHECK(s.seen.size() == 144);
  CHECK(s.unseen_list().size() == 256);
  std::set<int> envs, tasks;
  for (const auto& [e, t] : s.seen) {
    envs.insert(e);
    tasks.insert(t);
  }
  CHECK(envs.size() == 20);
  CHECK(tasks.size() == 20);

  Rng r2(9), r3(9);
  CHECK(make_split(5, 6, 12, r2).seen == make_split(5, 6, 12, r3).seen);

  PairSplit full = make_split(3, 4, 12, rng);
  CHECK(full.unseen_list().empty());

  CHECK_THROWS_AS(make_split(5, 5, 4, rng), std::invalid_argument);   // pigeonhole
  CHECK_THROWS_AS(make_split(5, 5, 26, rng), std::invalid_argument);  // too many
}

TEST_CASE("split file round-trip") {
  namespace fs = std::filesystem;
  Rng rng(3);
  PairSplit s = make_split(5, 6, 12, rng);
  s.seed = 3;
  const std::string path = (fs::temp_directory_path() / "synpo_split_test.json").string();
  s.save_file(path);
  PairSplit back = PairSplit::load_file(path);
  CHECK(back.n_envs == 5);
  CHECK(back.n_tasks == 6);
  CHECK(back.seen == s.seen);
  fs::remove(path);
}

TEST_CASE("transfer target pairs per setting") {
  auto cross = transfer_target_pairs(TransferSetting::CrossQuadrant, 4, 4, 4, 4);
  CHECK(cross.size() == 32);
  for (const auto& [e, t] : cross) CHECK(((e >= 4 && t < 4) || (e < 4 && t >= 4)));

  auto block = transfer_target_pairs(TransferSetting::NewBlock, 4, 4, 4, 4);
  CHECK(block.size() == 16);
  for (const auto& [e, t] : block) {
    CHECK(e >= 4);
    CHECK(t >= 4);
  }

  CHECK_THROWS_AS(transfer_target_pairs(TransferSetting::SparsePairs, 4, 4, 4, 4),
                  std::invalid_argument);
}

TEST_CASE("evaluate: expert succeeds always, random almost never") {
  WorldConfig world;
  const Task task{TreasureColor::Red, TreasureColor::Blue};
  Maze maze = fixture_maze(0);

  EvalResult ex = evaluate_policy(expert_factory(), maze, task, 0, 0, 200, 5, world);
  CHECK(ex.avg_sr == 1.0);
  CHECK(ex.avg_reward > 11.0);  // 12 minus step costs

  PolicyFactory random_factory = [](int e, int t) {
    auto rng = std::make_shared<Rng>(derive_seed({909, static_cast<uint64_t>(e),
                                                  static_cast<uint64_t>(t)}));
    return [rng](const WorldState&, const std::deque<SparseObs>&) {
      return rng->below(kNumActions);
    };
  };
  EvalResult rnd = evaluate_policy(random_factory, maze, task, 0, 0, 100, 5, world);
  CHECK(rnd.avg_sr < 0.2);
}

TEST_CASE("evaluate is deterministic in its seed and honors the step cap") {
  WorldConfig world;
  Maze maze = fixture_maze(1);
  const Task task{TreasureColor::Green, TreasureColor::Red};
  EvalResult a = evaluate_policy(expert_factory(), maze, task, 1, 2, 50, 42, world);
  EvalResult b = evaluate_policy(expert_factory(), maze, task, 1, 2, 50, 42, world);
  CHECK(a.avg_sr == b.avg_sr);
  CHECK(a.avg_reward == b.avg_reward);

  // A never-picking policy runs exactly to the cap.
  PolicyFactory walker = [](int, int) {
    auto rng = std::make_shared<Rng>(7);
    return [rng](const WorldState&, const std::deque<SparseObs>&) { return rng->below(4); };
  };
  Rng rr(11);
  EpisodeResult ep = rollout(
      maze, task, walker(0, 0), rr, world, 0, 0);
  CHECK(ep.trajectory.length() <= 300);
}

TEST_CASE("success matrix: bounds, expert saturation, aggregation consistency") {
  WorldConfig world;
  world.n_colors = 3;
  std::vector<Maze> mazes{fixture_maze(0), fixture_maze(1)};
  auto tasks = enumerate_tasks(3);
  tasks.resize(3);

  // Matrix over an expert stand-in turns all ones.
  SuccessMatrix m;
  m.n_envs = 2;
  m.n_tasks = 3;
  m.sr.assign(6, 0.0);
  m.reward.assign(6, 0.0);
  for (int t = 0; t < 3; ++t)
    for (int e = 0; e < 2; ++e) {
      EvalResult r = evaluate_policy(expert_factory(), mazes[e], tasks[t], e, t, 10, 3, world);
      m.at(t, e) = r.avg_sr;
    }
  for (double v : m.sr) CHECK(v == 1.0);

  Rng rng(5);
  PairSplit split = make_split(2, 3, 4, rng);
  const double seen_mean = m.mean_over(split.seen_list());
  double manual = 0;
  for (const auto& [e, t] : split.seen_list()) manual += m.at(t, e);
  manual /= split.seen_list().size();
  CHECK(std::abs(seen_mean - manual) < 1e-12);

  nlohmann::json summary = m.summary(split, 3);
  CHECK(summary.at("seen_avg_sr") == seen_mean);
  CHECK(summary.at("per_pair").size() == 6);

  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "synpo_matrix_test.csv").string();
  m.save_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "task,env_0,env_1");
  fs::remove(path);
}

TEST_CASE("greedy action selection is shift invariant") {
  Rng rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<float> logits(kNumActions);
    for (auto& v : logits) v = static_cast<float>(rng.uniform(-5, 5));
    std::vector<float> shifted = logits;
    const float c = static_cast<float>(rng.uniform(-50, 50));
    for (auto& v : shifted) v += c;
    CHECK(argmax_action<float>(logits) == argmax_action<float>(shifted));
  }
}

TEST_CASE("finetune: freeze contract, no-op at zero iterations, P-pair stability") {
  ModelConfig mc;
  mc.n_envs = 3;
  mc.n_tasks = 3;
  mc.n_colors = 3;
  mc.basis_k = 4;
  mc.embed_dim = 16;
  mc.state_dim = 12;
  mc.feature_hidden = 16;
  mc.coef_hidden = 16;
  mc.dis_hidden = 16;
  Rng rng(17);
  auto model = ModelF::init(mc, rng);

  WorldConfig world;
  world.n_colors = 3;
  auto tasks = enumerate_tasks(3);
  DemoConfig pure;
  std::vector<Trajectory> demos;
  Rng drng(19);
  // One demo per (env, new task 3) pair.
  for (int e = 0; e < 3; ++e)
    demos.push_back(sample_demonstration(fixture_maze(e), tasks[3], pure, drng, world, e, 3));

  // Rejected before rows exist.
  CHECK_THROWS_AS(finetune_embeddings(model, demos, FinetuneConfig{.iterations = 1}),
                  std::runtime_error);

  Rng ext_rng(23);
  model.extend_embeddings(0, 1, ext_rng);
  auto before = snapshot_params(model);

  // Zero iterations: everything byte-identical, flags untouched.
  std::map<std::string, bool> flags_before;
  for (const auto& n : model.params.names()) flags_before[n] = model.params.trainable(n);
  finetune_embeddings(model, demos, FinetuneConfig{.iterations = 0});
  for (const auto& [name, vals] : before)
    CHECK(std::memcmp(vals.data(), model.params.get(name).data(),
                      vals.size() * sizeof(float)) == 0);
  for (const auto& [n, f] : flags_before) CHECK(model.params.trainable(n) == f);

  // P-pair logits to compare across fine-tuning.
  Rng wrng(29);
  WorldState ws = reset(fixture_maze(0), tasks[0], wrng, world);
  std::deque<SparseObs> hist{render_observation_sparse(ws)};
  std::vector<float> stacked(kStackedSize);
  fill_stacked_history(hist, stacked);
  auto psi = model.infer_features(stacked);
  auto x = model.infer_state_action_all(psi);
  auto [al_before, be_before] = model.infer_coefficients(0, 0);
  auto logits_before = model.infer_policy_logits(x, al_before);

  FinetuneConfig fcfg;
  fcfg.iterations = 50;
  finetune_embeddings(model, demos, fcfg);

  // Every pre-existing parameter byte-identical; the new rows moved.
  for (const auto& [name, vals] : before) {
    if (name == "embed.task_ext") continue;
    CHECK(std::memcmp(vals.data(), model.params.get(name).data(),
                      vals.size() * sizeof(float)) == 0);
  }
  CHECK(std::memcmp(before.at("embed.task_ext").data(), model.params.get("embed.task_ext").data(),
                    before.at("embed.task_ext").size() * sizeof(float)) != 0);

  // Synthesized P-pair policies are bit-identical after fine-tuning on Q.
  auto psi2 = model.infer_features(stacked);
  auto x2 = model.infer_state_action_all(psi2);
  auto [al_after, be_after] = model.infer_coefficients(0, 0);
  auto logits_after = model.infer_policy_logits(x2, al_after);
  CHECK(std::memcmp(logits_before.data(), logits_after.data(),
                    logits_before.size() * sizeof(float)) == 0);

  // Demos tagged outside the extended tables are rejected.
  Trajectory bad = demos[0];
  bad.task_id = 9;
  CHECK_THROWS_AS(finetune_embeddings(model, {bad}, FinetuneConfig{.iterations = 1}),
                  std::invalid_argument);
}

TEST_CASE("fine-tuned new-task policy beats the random-row synthesis" *
          doctest::timeout(1200)) {
  // Phase 1: 3 environments x 3 tasks, all pairs seen.
  TrainConfig cfg;
  cfg.episodes = 3500;
  cfg.batch_size = 64;
  cfg.max_transitions_per_traj = 3;
  cfg.n_envs = 3;
  cfg.n_colors = 3;
  cfg.n_tasks_limit = 3;
  cfg.basis_k = 16;
  cfg.embed_dim = 64;
  cfg.state_dim = 64;
  cfg.feature_hidden = 512;
  cfg.coef_hidden = 128;
  cfg.dis_hidden = 128;
  cfg.perturb_prob = 0.3;
  cfg.label_expert = true;
  cfg.history_dropout = 0.4;
  cfg.lr_final_fraction = 0.15;
  cfg.seed = 21;
  TrainSession session(cfg, full_split(3, 3));
  session.run();

  ModelF model = session.model();
  Rng ext_rng(31);
  model.extend_embeddings(0, 1, ext_rng);  // task id 3

  WorldConfig world = session.world_config();
  auto tasks = enumerate_tasks(3);
  auto eval_new_task = [&](const ModelF& m) {
    double sr = 0;
    for (int e = 0; e < 3; ++e)
      sr += evaluate(m, session.mazes()[e], tasks[3], e, 3, 20, 77, world).avg_sr;
    return sr / 3;
  };

  const double before = eval_new_task(model);

  std::vector<Trajectory> demos;
  Rng drng(37);
  DemoConfig pure;
  for (int e = 0; e < 3; ++e)
    demos.push_back(sample_demonstration(session.mazes()[e], tasks[3], pure, drng, world, e, 3));
  FinetuneConfig fcfg;
  fcfg.iterations = 2000;
  finetune_embeddings(model, demos, fcfg);

  const double after = eval_new_task(model);
  MESSAGE("new-task AvgSR before ", before, " after ", after);
  CHECK(after > before);
}
