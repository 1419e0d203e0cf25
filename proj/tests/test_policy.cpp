#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "synpo/gradcheck.hpp"
#include "synpo/model.hpp"
#include "synpo/rng.hpp"

using namespace synpo;

namespace {

ModelConfig tiny_config(ModelVariant variant = ModelVariant::SynPo) {
  ModelConfig c;
  c.variant = variant;
  c.n_envs = 3;
  c.n_tasks = 4;
  c.basis_k = 4;
  c.embed_dim = 8;
  c.state_dim = 6;
  c.feature_hidden = 8;
  c.coef_hidden = 8;
  c.dis_hidden = 8;
  c.mlp_hidden1 = 12;
  c.mlp_hidden2 = 10;
  return c;
}

// Random stacked states with the sparsity profile of real observations,
// plus the matching encoder rows the feature extractor consumes.
template <typename T>
struct StatesFixture {
  Tensor<float> stacked;  // (n, 3072)
  Tensor<T> encoder;      // (n, kEncoderInput)

  std::vector<float> stacked_row(int i) const {
    const float* p = stacked.data() + static_cast<int64_t>(i) * kStackedSize;
    return std::vector<float>(p, p + kStackedSize);
  }
};

template <typename T>
StatesFixture<T> random_states(int n, Rng& rng) {
  StatesFixture<T> f{Tensor<float>({n, kStackedSize}), Tensor<T>({n, kEncoderInput})};
  for (int i = 0; i < n; ++i)
    for (int nz = 0; nz < 60; ++nz)
      f.stacked.at(i, rng.below(kStackedSize)) = static_cast<float>(rng.real01());
  for (int i = 0; i < n; ++i) {
    const float* p = f.stacked.data() + static_cast<int64_t>(i) * kStackedSize;
    fill_encoder_row(std::span<const float>(p, kStackedSize),
                     f.encoder.data() + static_cast<int64_t>(i) * kEncoderInput);
  }
  return f;
}

// Independent scalar-loop route for the synthesized policy logits, matching
// the factored form: contract the basis per action first, then combine.
template <typename T>
std::vector<double> oracle_logits(const SynPoModel<T>& m, const std::vector<T>& psi,
                                  const std::vector<T>& alpha) {
  const auto& basis = m.params.get("policy.basis");
  const double bias = m.params.get("policy.bias")[0];
  const int K = m.cfg.basis_k, D = m.cfg.state_dim, A = m.cfg.n_actions;
  std::vector<double> logits(A, 0.0);
  for (int a = 0; a < A; ++a) {
    double acc = 0;
    for (int k = 0; k < K; ++k) {
      double xka = 0;
      for (int d = 0; d < D; ++d)
        xka += static_cast<double>(psi[d]) * static_cast<double>(basis.at(k, d, a));
      acc += static_cast<double>(alpha[k]) * xka;
    }
    logits[a] = acc + bias;
  }
  return logits;
}

template <typename T>
double oracle_reward(const SynPoModel<T>& m, const std::vector<T>& psi, int action,
                     const std::vector<T>& beta) {
  const auto& basis = m.params.get("policy.basis");
  const int K = m.cfg.basis_k, D = m.cfg.state_dim;
  double acc = 0;
  for (int k = 0; k < K; ++k) {
    double xka = 0;
    for (int d = 0; d < D; ++d)
      xka += static_cast<double>(psi[d]) * static_cast<double>(basis.at(k, d, action));
    acc += static_cast<double>(beta[k]) * xka;
  }
  return acc + static_cast<double>(m.params.get("reward.bias")[0]);
}

}  // namespace

TEST_CASE("extract_features: determinism, output width, shape errors") {
  Rng rng(1);
  auto m = ModelD::init(tiny_config(), rng);
  auto states = random_states<double>(2, rng);
  auto run = [&] { return m.infer_features(states.stacked_row(0)); };
  auto a = run(), b = run();
  CHECK(a.size() == static_cast<size_t>(m.cfg.state_dim));
  CHECK(a == b);
  for (double v : a) CHECK(std::isfinite(v));

  std::vector<float> wrong(10, 0.f);
  CHECK_THROWS_AS(m.infer_features(wrong), std::invalid_argument);

  // Default configuration produces 128-dimensional features.
  ModelConfig full;
  full.n_envs = 2;
  full.n_tasks = 2;
  CHECK(full.state_dim == 128);
  CHECK(full.embed_dim == 128);
}

TEST_CASE("graph features match inference bit for bit") {
  Rng rng(3);
  auto m = ModelF::init(tiny_config(), rng);
  auto states = random_states<float>(3, rng);

  GraphBinding<float> bind(m.params);
  auto psi = m.features(bind, constant(states.encoder));
  const auto& out = forward(psi);

  for (int i = 0; i < 3; ++i) {
    auto direct = m.infer_features(states.stacked_row(i));
    for (int j = 0; j < m.cfg.state_dim; ++j) CHECK(out.at(i, j) == direct[j]);
  }
}

TEST_CASE("coefficients: shapes, MTL zeroing, distinct pairs differ") {
  Rng rng(5);
  auto m = ModelF::init(tiny_config(), rng);
  auto [alpha, beta] = m.infer_coefficients(0, 1);
  CHECK(alpha.size() == static_cast<size_t>(m.cfg.basis_k));
  CHECK(beta.size() == static_cast<size_t>(m.cfg.basis_k));

  // Zeroed environment input equals the MTL variant's coefficients.
  auto mtl = m;
  mtl.cfg.variant = ModelVariant::Mtl;
  auto zeroed = m;
  zeroed.params.get("embed.env").fill(0.0f);
  auto [a1, b1] = mtl.infer_coefficients(0, 1);
  auto [a2, b2] = zeroed.infer_coefficients(0, 1);
  CHECK(a1 == a2);
  CHECK(b1 == b2);

  // Random-init models give distinct alphas for distinct pairs.
  auto [a3, b3] = m.infer_coefficients(1, 1);
  auto [a4, b4] = m.infer_coefficients(0, 2);
  CHECK(alpha != a3);
  CHECK(alpha != a4);
}

TEST_CASE("policy_distribution: uniform at alpha=0, linear in alpha, oracle match") {
  Rng rng(7);
  auto m = ModelD::init(tiny_config(), rng);
  const int K = m.cfg.basis_k, A = m.cfg.n_actions, D = m.cfg.state_dim;

  std::vector<double> psi(D);
  for (auto& v : psi) v = rng.uniform(-1, 1);
  auto x = m.infer_state_action_all(psi);

  // alpha = 0: logits all equal the bias, distribution uniform.
  std::vector<double> zero(K, 0.0);
  auto logits0 = m.infer_policy_logits(x, zero);
  for (double v : logits0) CHECK(v == m.params.get("policy.bias")[0]);

  // Doubling alpha doubles logits - b_pi.
  std::vector<double> alpha(K), twice(K);
  for (int k = 0; k < K; ++k) {
    alpha[k] = rng.uniform(-1, 1);
    twice[k] = 2 * alpha[k];
  }
  const double b = m.params.get("policy.bias")[0];
  auto l1 = m.infer_policy_logits(x, alpha);
  auto l2 = m.infer_policy_logits(x, twice);
  for (int a = 0; a < A; ++a) CHECK(l2[a] - b == doctest::Approx(2 * (l1[a] - b)).epsilon(1e-12));

  // Scalar-loop oracle agreement at 1e-9, probabilities included.
  auto expect = oracle_logits(m, psi, alpha);
  std::vector<double> probs(A), oracle_probs(A);
  kernel_softmax_row(l1.data(), probs.data(), A);
  kernel_softmax_row(expect.data(), oracle_probs.data(), A);
  double sum = 0;
  for (int a = 0; a < A; ++a) {
    CHECK(std::abs(l1[a] - expect[a]) < 1e-9);
    CHECK(std::abs(probs[a] - oracle_probs[a]) < 1e-9);
    sum += probs[a];
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("policy distribution is invariant to shifting the bias") {
  Rng rng(9);
  auto m = ModelD::init(tiny_config(), rng);
  std::vector<double> psi(m.cfg.state_dim), alpha(m.cfg.basis_k);
  for (auto& v : psi) v = rng.uniform(-1, 1);
  for (auto& v : alpha) v = rng.uniform(-1, 1);
  auto x = m.infer_state_action_all(psi);
  auto l1 = m.infer_policy_logits(x, alpha);
  m.params.get("policy.bias")[0] += 13.5;
  auto l2 = m.infer_policy_logits(x, alpha);
  const int A = m.cfg.n_actions;
  std::vector<double> p1(A), p2(A);
  kernel_softmax_row(l1.data(), p1.data(), A);
  kernel_softmax_row(l2.data(), p2.data(), A);
  for (int a = 0; a < A; ++a) CHECK(std::abs(p1[a] - p2[a]) < 1e-9);
  CHECK(argmax_action<double>(l1) == argmax_action<double>(l2));
}

TEST_CASE("predict_reward: bias at beta=0, linearity, oracle match") {
  Rng rng(11);
  auto m = ModelD::init(tiny_config(), rng);
  const int K = m.cfg.basis_k;
  std::vector<double> psi(m.cfg.state_dim);
  for (auto& v : psi) v = rng.uniform(-1, 1);
  auto x = m.infer_state_action_all(psi);
  const double br = m.params.get("reward.bias")[0];

  std::vector<double> zero(K, 0.0);
  for (int a = 0; a < m.cfg.n_actions; ++a) CHECK(m.infer_reward(x, a, zero) == br);

  std::vector<double> b1(K), b2(K), b12(K);
  for (int k = 0; k < K; ++k) {
    b1[k] = rng.uniform(-1, 1);
    b2[k] = rng.uniform(-1, 1);
    b12[k] = b1[k] + b2[k];
  }
  const double r1 = m.infer_reward(x, 2, b1) - br;
  const double r2 = m.infer_reward(x, 2, b2) - br;
  const double r12 = m.infer_reward(x, 2, b12) - br;
  CHECK(r12 == doctest::Approx(r1 + r2).epsilon(1e-10));

  CHECK(std::abs(m.infer_reward(x, 3, b1) - oracle_reward(m, psi, 3, b1)) < 1e-9);
}

TEST_CASE("state_action_repr: zero input, reconstruction identities") {
  Rng rng(13);
  auto m = ModelD::init(tiny_config(), rng);
  const int K = m.cfg.basis_k, A = m.cfg.n_actions;

  std::vector<double> zero_psi(m.cfg.state_dim, 0.0);
  auto x0 = m.infer_state_action_all(zero_psi);
  for (double v : x0) CHECK(v == 0.0);

  std::vector<double> psi(m.cfg.state_dim), alpha(K), beta(K);
  for (auto& v : psi) v = rng.uniform(-1, 1);
  for (auto& v : alpha) v = rng.uniform(-1, 1);
  for (auto& v : beta) v = rng.uniform(-1, 1);
  auto x = m.infer_state_action_all(psi);

  // logits[a] == alpha . x[:, a] + b_pi ; reward == beta . x[:, a] + b_r.
  auto logits = m.infer_policy_logits(x, alpha);
  for (int a = 0; a < A; ++a) {
    double dot = 0;
    for (int k = 0; k < K; ++k) dot += alpha[k] * x[static_cast<size_t>(k) * A + a];
    CHECK(std::abs(logits[a] - (dot + m.params.get("policy.bias")[0])) < 1e-9);
    double rdot = 0;
    for (int k = 0; k < K; ++k) rdot += beta[k] * x[static_cast<size_t>(k) * A + a];
    CHECK(std::abs(m.infer_reward(x, a, beta) - (rdot + m.params.get("reward.bias")[0])) < 1e-9);
  }
}

TEST_CASE("assembled-map and per-basis routes agree on 100 random models") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig cfg = tiny_config();
    auto m = ModelD::init(cfg, rng);
    const int K = cfg.basis_k, D = cfg.state_dim, A = cfg.n_actions;
    std::vector<double> psi(D), alpha(K);
    for (auto& v : psi) v = rng.uniform(-2, 2);
    for (auto& v : alpha) v = rng.uniform(-2, 2);

    // Route 1: assemble U = sum_k alpha_k M_k, then psi^T U.
    const auto& basis = m.params.get("policy.basis");
    std::vector<double> u(static_cast<size_t>(D) * A, 0.0);
    for (int k = 0; k < K; ++k)
      for (int d = 0; d < D; ++d)
        for (int a = 0; a < A; ++a)
          u[static_cast<size_t>(d) * A + a] += alpha[k] * basis.at(k, d, a);
    std::vector<double> route1(A, m.params.get("policy.bias")[0]);
    for (int d = 0; d < D; ++d)
      for (int a = 0; a < A; ++a) route1[a] += psi[d] * u[static_cast<size_t>(d) * A + a];

    // Route 2: per-basis contraction then coefficient combination.
    auto x = m.infer_state_action_all(psi);
    auto route2 = m.infer_policy_logits(x, alpha);
    for (int a = 0; a < A; ++a) CHECK(std::abs(route1[a] - route2[a]) < 1e-6);
  }
}

TEST_CASE("MTL mode logits are bit-identical to a zeroed environment table") {
  Rng rng(19);
  auto synpo_model = ModelF::init(tiny_config(), rng);
  synpo_model.params.get("embed.env").fill(0.0f);

  auto mtl_model = synpo_model;
  mtl_model.cfg.variant = ModelVariant::Mtl;

  auto states = random_states<float>(1, rng);
  const std::vector<float> row = states.stacked_row(0);
  for (int env = 0; env < 3; ++env)
    for (int task = 0; task < 4; ++task) {
      auto psi_a = synpo_model.infer_features(row);
      auto psi_b = mtl_model.infer_features(row);
      auto xa = synpo_model.infer_state_action_all(psi_a);
      auto xb = mtl_model.infer_state_action_all(psi_b);
      auto [al_a, be_a] = synpo_model.infer_coefficients(env, task);
      auto [al_b, be_b] = mtl_model.infer_coefficients(env, task);
      auto la = synpo_model.infer_policy_logits(xa, al_a);
      auto lb = mtl_model.infer_policy_logits(xb, al_b);
      CHECK(std::memcmp(la.data(), lb.data(), la.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("policy and reward share basis storage") {
  Rng rng(23);
  auto m = ModelD::init(tiny_config(), rng);
  std::vector<double> psi(m.cfg.state_dim), alpha(m.cfg.basis_k), beta(m.cfg.basis_k);
  for (auto& v : psi) v = rng.uniform(-1, 1);
  for (auto& v : alpha) v = rng.uniform(-1, 1);
  for (auto& v : beta) v = rng.uniform(-1, 1);

  auto x = m.infer_state_action_all(psi);
  auto logits_before = m.infer_policy_logits(x, alpha);
  const double reward_before = m.infer_reward(x, 0, beta);

  m.params.get("policy.basis")[0] += 0.5;  // element (k=0, d=0, a=0)
  auto x2 = m.infer_state_action_all(psi);
  auto logits_after = m.infer_policy_logits(x2, alpha);
  const double reward_after = m.infer_reward(x2, 0, beta);

  CHECK(logits_before[0] != logits_after[0]);
  CHECK(reward_before != reward_after);
}

TEST_CASE("mlp baseline: simplex output, determinism, gradient check") {
  Rng rng(29);
  auto m = ModelD::init(tiny_config(ModelVariant::Mlp), rng);
  auto states = random_states<double>(2, rng);

  GraphBinding<double> bind(m.params);
  auto psi = m.features(bind, constant(states.encoder));
  auto env = m.env_rows(bind, {0, 2});
  auto task = m.task_rows(bind, {1, 3});
  auto dist = softmax(m.mlp_logits(bind, psi, env, task));
  const auto& p = forward(dist);
  for (int i = 0; i < 2; ++i) {
    double sum = 0;
    for (int a = 0; a < m.cfg.n_actions; ++a) {
      CHECK(p.at(i, a) >= 0);
      sum += p.at(i, a);
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  const auto snapshot = forward(dist);
  for (int64_t i = 0; i < snapshot.numel(); ++i) CHECK(snapshot[i] == p[i]);

  auto build = [&](ParameterStore<double>& s) {
    GraphBinding<double> b(s);
    auto f = m.features(b, constant(states.encoder));
    auto e = m.env_rows(b, {0, 2});
    auto t = m.task_rows(b, {1, 3});
    auto logp = vlog(softmax(m.mlp_logits(b, f, e, t)));
    return scale(mean_all(pick_entries(logp, {1, 4})), -1.0);
  };
  CHECK(grad_check<double>(build, m.params, 1e-5) < 1e-4);
}

TEST_CASE("gradient check: policy distribution with cross-entropy") {
  Rng rng(31);
  auto m = ModelD::init(tiny_config(), rng);
  auto states = random_states<double>(3, rng);
  auto build = [&](ParameterStore<double>& s) {
    GraphBinding<double> b(s);
    auto psi = m.features(b, constant(states.encoder));
    auto xall = m.state_action_all(b, psi);
    auto [alpha, beta] = m.coefficients(b, m.env_rows(b, {0, 1, 2}), m.task_rows(b, {3, 0, 1}));
    auto logits = m.policy_logits(b, xall, alpha);
    auto logp = vlog(softmax(logits));
    return scale(mean_all(pick_entries(logp, {2, 0, 4})), -1.0);
  };
  for (int trial = 0; trial < 3; ++trial) CHECK(grad_check<double>(build, m.params, 1e-5) < 1e-4);
}

TEST_CASE("gradient check: reward prediction with squared error") {
  Rng rng(37);
  auto m = ModelD::init(tiny_config(), rng);
  auto states = random_states<double>(3, rng);
  Tensor<double> targets({3, 1}, {0.99, -0.02, -0.01});
  std::vector<int> actions{1, 0, 4};
  auto build = [&](ParameterStore<double>& s) {
    GraphBinding<double> b(s);
    auto psi = m.features(b, constant(states.encoder));
    auto xall = m.state_action_all(b, psi);
    auto [alpha, beta] = m.coefficients(b, m.env_rows(b, {0, 0, 1}), m.task_rows(b, {2, 1, 3}));
    // Select x at the taken action: pick column a from each (K, A) block.
    auto xflat = reshape(xall, {-1, m.cfg.n_actions});  // (N*K, A)
    std::vector<int> cols;
    for (int n = 0; n < 3; ++n)
      for (int k = 0; k < m.cfg.basis_k; ++k) cols.push_back(actions[n]);
    auto xsel = reshape(pick_entries(xflat, cols), {-1, m.cfg.basis_k});
    auto pred = m.reward_prediction(b, xsel, beta);
    return mean_all(squared_error(pred, constant(targets)));
  };
  for (int trial = 0; trial < 3; ++trial) CHECK(grad_check<double>(build, m.params, 1e-5) < 1e-4);
}

TEST_CASE("model checkpoint round-trip preserves config and parameters") {
  namespace fs = std::filesystem;
  Rng rng(41);
  auto m = ModelF::init(tiny_config(), rng);
  const std::string path = (fs::temp_directory_path() / "synpo_model_test").string();
  m.save(path);
  auto loaded = ModelF::load(path);
  CHECK(loaded.cfg.basis_k == m.cfg.basis_k);
  CHECK(loaded.cfg.variant == m.cfg.variant);
  CHECK(loaded.params.names() == m.params.names());
  for (const auto& name : m.params.names()) {
    const auto& a = m.params.get(name);
    const auto& b = loaded.params.get(name);
    REQUIRE(a.shape() == b.shape());
    CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0);
  }
  fs::remove(path + ".bin");
  fs::remove(path + ".manifest");
}

TEST_CASE("variant names round-trip and reject junk") {
  CHECK(variant_from_name("synpo") == ModelVariant::SynPo);
  CHECK(variant_from_name("mtl") == ModelVariant::Mtl);
  CHECK_THROWS_WITH_AS(variant_from_name("gru"), doctest::Contains("variant"),
                       std::invalid_argument);
}
