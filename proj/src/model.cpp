#include "synpo/model.hpp"

#include <cmath>
#include <stdexcept>

namespace synpo {

const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::SynPo: return "synpo";
    case ModelVariant::Mlp: return "mlp";
    case ModelVariant::Mtl: return "mtl";
  }
  return "?";
}

ModelVariant variant_from_name(const std::string& name) {
  if (name == "synpo") return ModelVariant::SynPo;
  if (name == "mlp") return ModelVariant::Mlp;
  if (name == "mtl") return ModelVariant::Mtl;
  throw std::invalid_argument("unknown model variant \"" + name +
                              "\" (expected synpo, mlp or mtl)");
}

nlohmann::json ModelConfig::to_json() const {
  return {
      {"variant", variant_name(variant)},
      {"n_envs", n_envs},
      {"n_tasks", n_tasks},
      {"n_colors", n_colors},
      {"window_size", window_size},
      {"n_actions", n_actions},
      {"basis_k", basis_k},
      {"embed_dim", embed_dim},
      {"state_dim", state_dim},
      {"feature_hidden", feature_hidden},
      {"coef_hidden", coef_hidden},
      {"dis_hidden", dis_hidden},
      {"mlp_hidden1", mlp_hidden1},
      {"mlp_hidden2", mlp_hidden2},
      {"env_ext_rows", env_ext_rows},
      {"task_ext_rows", task_ext_rows},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = variant_from_name(j.at("variant"));
  c.n_envs = j.at("n_envs");
  c.n_tasks = j.at("n_tasks");
  c.n_colors = j.at("n_colors");
  c.window_size = j.at("window_size");
  c.n_actions = j.at("n_actions");
  c.basis_k = j.at("basis_k");
  c.embed_dim = j.at("embed_dim");
  c.state_dim = j.at("state_dim");
  c.feature_hidden = j.at("feature_hidden");
  c.coef_hidden = j.at("coef_hidden");
  c.dis_hidden = j.at("dis_hidden");
  c.mlp_hidden1 = j.at("mlp_hidden1");
  c.mlp_hidden2 = j.at("mlp_hidden2");
  c.env_ext_rows = j.value("env_ext_rows", 0);
  c.task_ext_rows = j.value("task_ext_rows", 0);
  return c;
}

namespace {

template <typename T>
Tensor<T> fan_in_uniform(Shape shape, int fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  t.fill_uniform(rng, -bound, bound);
  return t;
}

}  // namespace

template <typename T>
void SynPoModel<T>::add_linear(Rng& rng, const std::string& prefix, int in, int out) {
  params.add(prefix + ".w", fan_in_uniform<T>({in, out}, in, rng));
  params.add(prefix + ".b", Tensor<T>({1, out}));
}

template <typename T>
SynPoModel<T> SynPoModel<T>::init(const ModelConfig& cfg, Rng& rng) {
  if (cfg.n_envs <= 0 || cfg.n_tasks <= 0)
    throw std::invalid_argument("SynPoModel: n_envs and n_tasks must be positive");
  SynPoModel m;
  m.cfg = cfg;

  // Creation order is fixed so a given rng seed always produces the same
  // parameters.
  m.add_linear(rng, "features.l1", cfg.input_dim(), cfg.feature_hidden);
  m.add_linear(rng, "features.l2", cfg.feature_hidden, cfg.state_dim);

  m.params.add("embed.env", fan_in_uniform<T>({cfg.n_envs, cfg.embed_dim}, cfg.embed_dim, rng),
               /*trainable=*/cfg.variant != ModelVariant::Mtl);
  m.params.add("embed.task", fan_in_uniform<T>({cfg.n_tasks, cfg.embed_dim}, cfg.embed_dim, rng));

  if (m.is_bilinear()) {
    m.params.add("policy.basis", fan_in_uniform<T>({cfg.basis_k, cfg.state_dim, cfg.n_actions},
                                                   cfg.state_dim, rng));
    m.params.add("policy.bias", Tensor<T>({1}));
    m.params.add("reward.bias", Tensor<T>({1}));
    m.add_linear(rng, "alpha.l1", 2 * cfg.embed_dim, cfg.coef_hidden);
    m.add_linear(rng, "alpha.l2", cfg.coef_hidden, cfg.basis_k);
    m.add_linear(rng, "beta.l1", 2 * cfg.embed_dim, cfg.coef_hidden);
    m.add_linear(rng, "beta.l2", cfg.coef_hidden, cfg.basis_k);
  } else {
    m.add_linear(rng, "mlp.l1", cfg.state_dim + 2 * cfg.embed_dim, cfg.mlp_hidden1);
    m.add_linear(rng, "mlp.l2", cfg.mlp_hidden1, cfg.mlp_hidden2);
    m.add_linear(rng, "mlp.l3", cfg.mlp_hidden2, cfg.n_actions);
  }

  m.add_linear(rng, "dis.g.l1", cfg.dis_input_dim(), cfg.dis_hidden);
  m.add_linear(rng, "dis.g.l2", cfg.dis_hidden, cfg.embed_dim);
  m.add_linear(rng, "dis.h.l1", cfg.dis_input_dim(), cfg.dis_hidden);
  m.add_linear(rng, "dis.h.l2", cfg.dis_hidden, cfg.embed_dim);
  return m;
}

template <typename T>
void SynPoModel<T>::save(const std::string& path) const {
  save_checkpoint(params, path, cfg.to_json());
}

template <typename T>
SynPoModel<T> SynPoModel<T>::load(const std::string& path) {
  SynPoModel m;
  nlohmann::json meta = load_checkpoint(m.params, path);
  m.cfg = ModelConfig::from_json(meta);
  return m;
}

template <typename T>
void SynPoModel<T>::extend_embeddings(int new_envs, int new_tasks, Rng& rng) {
  if (new_envs < 0 || new_tasks < 0)
    throw std::invalid_argument("extend_embeddings: negative row counts");
  if (cfg.env_ext_rows > 0 || cfg.task_ext_rows > 0)
    throw std::runtime_error("extend_embeddings: model already extended");
  if (new_envs > 0) {
    params.add("embed.env_ext",
               fan_in_uniform<T>({new_envs, cfg.embed_dim}, cfg.embed_dim, rng));
    cfg.env_ext_rows = new_envs;
  }
  if (new_tasks > 0) {
    params.add("embed.task_ext",
               fan_in_uniform<T>({new_tasks, cfg.embed_dim}, cfg.embed_dim, rng));
    cfg.task_ext_rows = new_tasks;
  }
}

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

template <typename T>
Var<T> SynPoModel<T>::linear(GraphBinding<T>& bind, const std::string& prefix, Var<T> x) const {
  return add(matmul(std::move(x), bind(prefix + ".w")), bind(prefix + ".b"));
}

template <typename T>
Var<T> SynPoModel<T>::features(GraphBinding<T>& bind, Var<T> x) const {
  auto h = relu(linear(bind, "features.l1", std::move(x)));
  return linear(bind, "features.l2", std::move(h));
}

template <typename T>
Var<T> SynPoModel<T>::env_rows(GraphBinding<T>& bind, const std::vector<int>& ids) const {
  if (cfg.variant == ModelVariant::Mtl)
    return constant(Tensor<T>({static_cast<int>(ids.size()), cfg.embed_dim}));
  Var<T> table = bind("embed.env");
  if (cfg.env_ext_rows > 0) table = concat<T>({table, bind("embed.env_ext")}, 0);
  return gather(table, ids);
}

template <typename T>
Var<T> SynPoModel<T>::task_rows(GraphBinding<T>& bind, const std::vector<int>& ids) const {
  Var<T> table = bind("embed.task");
  if (cfg.task_ext_rows > 0) table = concat<T>({table, bind("embed.task_ext")}, 0);
  return gather(table, ids);
}

template <typename T>
std::pair<Var<T>, Var<T>> SynPoModel<T>::coefficients(GraphBinding<T>& bind, Var<T> env_emb,
                                                      Var<T> task_emb) const {
  auto in = concat<T>({std::move(env_emb), std::move(task_emb)}, 1);
  auto alpha = linear(bind, "alpha.l2", relu(linear(bind, "alpha.l1", in)));
  auto beta = linear(bind, "beta.l2", relu(linear(bind, "beta.l1", in)));
  return {alpha, beta};
}

template <typename T>
Var<T> SynPoModel<T>::state_action_all(GraphBinding<T>& bind, Var<T> psi) const {
  auto mflat = reshape(permute3(bind("policy.basis"), 1, 0, 2),
                       {cfg.state_dim, cfg.basis_k * cfg.n_actions});
  auto flat = matmul(std::move(psi), mflat);
  return reshape(flat, {-1, cfg.basis_k, cfg.n_actions});
}

template <typename T>
Var<T> SynPoModel<T>::policy_logits(GraphBinding<T>& bind, Var<T> x_all,
                                    Var<T> alpha_rows) const {
  auto a3 = reshape(std::move(alpha_rows), {-1, cfg.basis_k, 1});
  auto combined = sum_axis(mul(std::move(x_all), a3), 1);
  return add(combined, bind("policy.bias"));
}

template <typename T>
Var<T> SynPoModel<T>::reward_prediction(GraphBinding<T>& bind, Var<T> x_sel,
                                        Var<T> beta_rows) const {
  auto s = sum_axis(mul(std::move(x_sel), std::move(beta_rows)), 1);
  return add(reshape(s, {-1, 1}), bind("reward.bias"));
}

template <typename T>
Var<T> SynPoModel<T>::mlp_logits(GraphBinding<T>& bind, Var<T> psi, Var<T> env_emb,
                                 Var<T> task_emb) const {
  auto in = concat<T>({std::move(psi), std::move(env_emb), std::move(task_emb)}, 1);
  auto h1 = relu(linear(bind, "mlp.l1", in));
  auto h2 = relu(linear(bind, "mlp.l2", h1));
  return linear(bind, "mlp.l3", h2);
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

template <typename T>
void SynPoModel<T>::infer_linear(const std::string& prefix, std::span<const T> in,
                                 std::vector<T>& out, bool relu_after) const {
  const Tensor<T>& w = params.get(prefix + ".w");
  const Tensor<T>& b = params.get(prefix + ".b");
  const int k = w.dim(0), n = w.dim(1);
  if (static_cast<int>(in.size()) != k)
    throw std::invalid_argument(prefix + ": input size " + std::to_string(in.size()) +
                                ", expected " + std::to_string(k));
  out.assign(n, T(0));
  kernel_matmul_acc(in.data(), w.data(), out.data(), 1, k, n);
  for (int j = 0; j < n; ++j) {
    out[j] += b[j];
    if (relu_after && out[j] < T(0)) out[j] = T(0);
  }
}

template <typename T>
std::vector<T> SynPoModel<T>::infer_features(std::span<const float> x3072) const {
  std::vector<T> x(cfg.input_dim());
  fill_encoder_row(x3072, x.data());
  std::vector<T> h, psi;
  infer_linear("features.l1", x, h, /*relu_after=*/true);
  infer_linear("features.l2", h, psi, /*relu_after=*/false);
  return psi;
}

template <typename T>
std::vector<T> SynPoModel<T>::infer_state_action_all(std::span<const T> psi) const {
  const Tensor<T>& basis = params.get("policy.basis");
  const int K = cfg.basis_k, D = cfg.state_dim, A = cfg.n_actions;
  if (static_cast<int>(psi.size()) != D)
    throw std::invalid_argument("infer_state_action_all: psi has wrong size");
  std::vector<T> x(static_cast<size_t>(K) * A, T(0));
  // Same accumulation order (ascending d, zero-skip) as the graph matmul
  // against the permuted basis.
  for (int d = 0; d < D; ++d) {
    const T pv = psi[d];
    if (pv == T(0)) continue;
    for (int k = 0; k < K; ++k) {
      const T* row = basis.data() + (static_cast<int64_t>(k) * D + d) * A;
      T* ox = x.data() + static_cast<int64_t>(k) * A;
      for (int a = 0; a < A; ++a) ox[a] += pv * row[a];
    }
  }
  return x;
}

template <typename T>
std::vector<T> SynPoModel<T>::embedding_row(bool env_table, int id) const {
  const char* base = env_table ? "embed.env" : "embed.task";
  const char* ext = env_table ? "embed.env_ext" : "embed.task_ext";
  const int base_rows = env_table ? cfg.n_envs : cfg.n_tasks;
  const int total = env_table ? cfg.total_envs() : cfg.total_tasks();
  if (id < 0 || id >= total)
    throw std::out_of_range(std::string(base) + ": row " + std::to_string(id) + " out of range");
  const Tensor<T>& t = id < base_rows ? params.get(base) : params.get(ext);
  const int row = id < base_rows ? id : id - base_rows;
  const T* p = t.data() + static_cast<int64_t>(row) * cfg.embed_dim;
  return std::vector<T>(p, p + cfg.embed_dim);
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> SynPoModel<T>::infer_coefficients(int env_id,
                                                                            int task_id) const {
  std::vector<T> in(2 * cfg.embed_dim, T(0));
  if (cfg.variant != ModelVariant::Mtl) {
    auto e = embedding_row(true, env_id);
    std::copy(e.begin(), e.end(), in.begin());
  }
  auto t = embedding_row(false, task_id);
  std::copy(t.begin(), t.end(), in.begin() + cfg.embed_dim);

  std::vector<T> h, alpha, beta;
  infer_linear("alpha.l1", in, h, true);
  infer_linear("alpha.l2", h, alpha, false);
  infer_linear("beta.l1", in, h, true);
  infer_linear("beta.l2", h, beta, false);
  return {std::move(alpha), std::move(beta)};
}

template <typename T>
std::vector<T> SynPoModel<T>::infer_policy_logits(std::span<const T> x_all,
                                                  std::span<const T> alpha) const {
  const int K = cfg.basis_k, A = cfg.n_actions;
  const T bias = params.get("policy.bias")[0];
  std::vector<T> logits(A, T(0));
  for (int a = 0; a < A; ++a) {
    T acc = T(0);
    for (int k = 0; k < K; ++k) acc += x_all[static_cast<size_t>(k) * A + a] * alpha[k];
    logits[a] = acc + bias;
  }
  return logits;
}

template <typename T>
T SynPoModel<T>::infer_reward(std::span<const T> x_all, int action,
                              std::span<const T> beta) const {
  const int K = cfg.basis_k, A = cfg.n_actions;
  T acc = T(0);
  for (int k = 0; k < K; ++k) acc += x_all[static_cast<size_t>(k) * A + action] * beta[k];
  return acc + params.get("reward.bias")[0];
}

template <typename T>
std::vector<T> SynPoModel<T>::infer_mlp_logits(std::span<const T> psi, int env_id,
                                               int task_id) const {
  std::vector<T> in;
  in.reserve(cfg.state_dim + 2 * cfg.embed_dim);
  in.insert(in.end(), psi.begin(), psi.end());
  auto e = embedding_row(true, env_id);
  auto t = embedding_row(false, task_id);
  in.insert(in.end(), e.begin(), e.end());
  in.insert(in.end(), t.begin(), t.end());
  std::vector<T> h1, h2, logits;
  infer_linear("mlp.l1", in, h1, true);
  infer_linear("mlp.l2", h1, h2, true);
  infer_linear("mlp.l3", h2, logits, false);
  return logits;
}

template struct SynPoModel<float>;
template struct SynPoModel<double>;

}  // namespace synpo
