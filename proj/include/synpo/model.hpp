// Policy synthesis from environment and task embeddings: a shared basis of
// bilinear maps between state features and actions, combined by
// pair-conditioned coefficients for the policy head and the reward head.
// Includes the flat state feature extractor, the MLP baseline, and the MTL
// degeneration (environment embeddings replaced by zeros).
#pragma once

#include <json.hpp>

#include "synpo/adam.hpp"
#include "synpo/graph.hpp"
#include "synpo/params.hpp"
#include "synpo/rng.hpp"
#include "synpo/world.hpp"

namespace synpo {

enum class ModelVariant : int { SynPo, Mlp, Mtl };

const char* variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& name);

// The flat encoder reads the flattened stacked state plus, per frame, a
// small agent-relative summary decoded from the observation itself: the
// treasure value under the agent and, for each color, a presence flag and
// the treasure's displacement from the agent split into positive/negative
// parts. A convolutional extractor recovers such relative geometry through
// spatial weight sharing; a flat perceptron would need a quadratic number of
// cell-pair detectors to do the same, which dominates training time on
// randomized layouts.
inline constexpr int kFrameSummary = 1 + 5 * kNumColors;
inline constexpr int kEncoderInput = kStackedSize + kFrameStack * kFrameSummary;

// dst must hold kEncoderInput values.
template <typename T>
void fill_encoder_row(std::span<const float> stacked, T* dst) {
  if (static_cast<int>(stacked.size()) != kStackedSize)
    throw std::invalid_argument("fill_encoder_row: expected a 16x16x12 stacked state");
  for (int i = 0; i < kStackedSize; ++i) dst[i] = static_cast<T>(stacked[i]);
  const int frame_ch = kObsChannels * kFrameStack;
  for (int slot = 0; slot < kFrameStack; ++slot) {
    int agent_cell = -1;
    int treasure_cell[kNumColors] = {-1, -1, -1, -1, -1};
    float coincidence = 0.0f;
    for (int cell = 0; cell < kGridCells; ++cell) {
      const float treasure = stacked[cell * frame_ch + slot * kObsChannels + 1];
      const float agent = stacked[cell * frame_ch + slot * kObsChannels + 2];
      if (agent != 0.0f) agent_cell = cell;
      if (treasure != 0.0f) {
        const int color = static_cast<int>(treasure * kNumColors + 0.5f) - 1;
        if (color >= 0 && color < kNumColors) treasure_cell[color] = cell;
      }
      coincidence += treasure * agent;
    }
    T* out = dst + kStackedSize + slot * kFrameSummary;
    out[0] = static_cast<T>(coincidence);
    const int ar = agent_cell < 0 ? 0 : agent_cell / kGridSize;
    const int ac = agent_cell < 0 ? 0 : agent_cell % kGridSize;
    for (int color = 0; color < kNumColors; ++color) {
      T* f = out + 1 + 5 * color;
      if (treasure_cell[color] < 0 || agent_cell < 0) {
        f[0] = f[1] = f[2] = f[3] = f[4] = T(0);
        continue;
      }
      const float dr = static_cast<float>(treasure_cell[color] / kGridSize - ar) / kGridSize;
      const float dc = static_cast<float>(treasure_cell[color] % kGridSize - ac) / kGridSize;
      f[0] = T(1);  // present
      f[1] = static_cast<T>(dr > 0 ? dr : 0.0f);
      f[2] = static_cast<T>(dr < 0 ? -dr : 0.0f);
      f[3] = static_cast<T>(dc > 0 ? dc : 0.0f);
      f[4] = static_cast<T>(dc < 0 ? -dc : 0.0f);
    }
  }
}

struct ModelConfig {
  ModelVariant variant = ModelVariant::SynPo;
  int n_envs = 0;
  int n_tasks = 0;
  int n_colors = kNumColors;
  int window_size = 3;
  int n_actions = kNumActions;
  int basis_k = 32;        // number of shared basis maps
  int embed_dim = 128;     // environment / task embedding width
  int state_dim = 128;     // feature extractor output
  int feature_hidden = 512;
  int coef_hidden = 512;   // alpha / beta nets
  int dis_hidden = 512;    // disentanglement heads g / h
  int mlp_hidden1 = 1024;  // MLP baseline
  int mlp_hidden2 = 512;
  int env_ext_rows = 0;    // embedding rows appended for transfer
  int task_ext_rows = 0;

  int input_dim() const { return kEncoderInput; }
  int total_envs() const { return n_envs + env_ext_rows; }
  int total_tasks() const { return n_tasks + task_ext_rows; }
  // Disentanglement heads read the state-action representation for the
  // bilinear variants; the MLP baseline has no basis, so they read psi.
  int dis_input_dim() const { return variant == ModelVariant::Mlp ? state_dim : basis_k; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Per-graph binding of parameter leaves: one leaf per parameter name, so
// gradients from every use accumulate in one place.
template <typename T>
class GraphBinding {
 public:
  explicit GraphBinding(const ParameterStore<T>& store) : store_(&store) {}

  Var<T> operator()(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    Var<T> v = leaf_ref(&store_->get(name), store_->trainable(name));
    leaves_.emplace(name, v);
    return v;
  }

  // Gradient pointers for every trainable bound leaf; valid while the graph
  // is alive and backward() has run.
  GradMap<T> grads() const {
    GradMap<T> out;
    for (const auto& [name, v] : leaves_)
      if (v->requires_grad) out.emplace(name, &v->grad);
    return out;
  }

 private:
  const ParameterStore<T>* store_;
  std::map<std::string, Var<T>> leaves_;
};

template <typename T>
struct SynPoModel {
  ModelConfig cfg;
  ParameterStore<T> params;

  static SynPoModel init(const ModelConfig& cfg, Rng& rng);

  void save(const std::string& path) const;
  static SynPoModel load(const std::string& path);

  // Appends freshly initialized embedding rows for new environments/tasks
  // (transfer phase). Existing rows keep their values.
  void extend_embeddings(int new_envs, int new_tasks, Rng& rng);

  bool is_bilinear() const { return cfg.variant != ModelVariant::Mlp; }

  // -------------------------------------------------------------------------
  // Graph builders (training / gradient checks)
  // -------------------------------------------------------------------------

  // (N, kEncoderInput) encoder rows -> (N, d_s) features.
  Var<T> features(GraphBinding<T>& bind, Var<T> x) const;

  // Embedding rows for a list of ids; env rows come back as zeros under MTL.
  Var<T> env_rows(GraphBinding<T>& bind, const std::vector<int>& ids) const;
  Var<T> task_rows(GraphBinding<T>& bind, const std::vector<int>& ids) const;

  // (P, d_e) x (P, d_e) -> alpha, beta (P, K) from concat(e_env, e_task).
  std::pair<Var<T>, Var<T>> coefficients(GraphBinding<T>& bind, Var<T> env_emb,
                                         Var<T> task_emb) const;

  // Basis contracted against all actions: psi (N, d_s) -> x (N, K, A).
  Var<T> state_action_all(GraphBinding<T>& bind, Var<T> psi) const;

  // logits[n, a] = sum_k alpha[n, k] * x[n, k, a] + b_pi.
  Var<T> policy_logits(GraphBinding<T>& bind, Var<T> x_all, Var<T> alpha_rows) const;

  // r[n] = sum_k beta[n, k] * x_sel[n, k] + b_r, with x_sel picked at the
  // taken action; output (N, 1).
  Var<T> reward_prediction(GraphBinding<T>& bind, Var<T> x_sel, Var<T> beta_rows) const;

  // MLP baseline: concat(psi, e_env, e_task) -> logits (N, A).
  Var<T> mlp_logits(GraphBinding<T>& bind, Var<T> psi, Var<T> env_emb, Var<T> task_emb) const;

  // -------------------------------------------------------------------------
  // Inference (no autodiff; bit-identical to the graph path)
  // -------------------------------------------------------------------------

  std::vector<T> infer_features(std::span<const float> x3072) const;
  // x[k * A + a] layout.
  std::vector<T> infer_state_action_all(std::span<const T> psi) const;
  std::pair<std::vector<T>, std::vector<T>> infer_coefficients(int env_id, int task_id) const;
  std::vector<T> infer_policy_logits(std::span<const T> x_all,
                                     std::span<const T> alpha) const;
  std::vector<T> infer_mlp_logits(std::span<const T> psi, int env_id, int task_id) const;
  T infer_reward(std::span<const T> x_all, int action, std::span<const T> beta) const;

  std::vector<T> embedding_row(bool env_table, int id) const;

  // w/b forward for one named layer; shared by every inference path.
  void infer_linear(const std::string& prefix, std::span<const T> in, std::vector<T>& out,
                    bool relu_after) const;

 private:
  void add_linear(Rng& rng, const std::string& prefix, int in, int out);
  Var<T> linear(GraphBinding<T>& bind, const std::string& prefix, Var<T> x) const;
};

// Greedy action with deterministic tie-breaking (lowest index wins).
template <typename T>
int argmax_action(std::span<const T> logits) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(logits.size()); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

using ModelF = SynPoModel<float>;
using ModelD = SynPoModel<double>;

}  // namespace synpo
