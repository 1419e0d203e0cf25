#include "synpo/disentangle.hpp"

#include <cmath>
#include <stdexcept>

namespace synpo {

namespace {

template <typename T>
Var<T> table_rows(const SynPoModel<T>& model, GraphBinding<T>& bind, char head,
                  const std::vector<int>& candidate_rows) {
  if (head != 'g' && head != 'h')
    throw std::invalid_argument("disentangle: head must be 'g' (environment) or 'h' (task)");
  if (head == 'g') return model.env_rows(bind, candidate_rows);
  return model.task_rows(bind, candidate_rows);
}

}  // namespace

template <typename T>
Var<T> disentangle_nll(const SynPoModel<T>& model, GraphBinding<T>& bind, char head, Var<T> x,
                       const std::vector<int>& candidate_rows, const std::vector<int>& labels) {
  if (candidate_rows.empty()) throw std::invalid_argument("disentangle: no candidate rows");
  const std::string prefix = head == 'g' ? "dis.g" : "dis.h";
  auto h1 = relu(add(matmul(std::move(x), bind(prefix + ".l1.w")), bind(prefix + ".l1.b")));
  auto proj = add(matmul(h1, bind(prefix + ".l2.w")), bind(prefix + ".l2.b"));  // (N, d_e)
  auto rows = table_rows(model, bind, head, candidate_rows);                    // (C, d_e)
  auto scores = matmul(proj, rows, /*trans_b=*/true);                           // (N, C)
  auto logp = log_softmax(scores);
  return scale(pick_entries(logp, labels), T(-1));
}

template <typename T>
T disentangle_loss_value(const SynPoModel<T>& model, char head,
                         const std::vector<std::vector<T>>& xs,
                         const std::vector<int>& candidate_rows, int label_row) {
  if (xs.empty()) throw std::invalid_argument("disentangle: empty trajectory");
  int label = -1;
  for (size_t i = 0; i < candidate_rows.size(); ++i)
    if (candidate_rows[i] == label_row) label = static_cast<int>(i);
  if (label < 0) throw std::invalid_argument("disentangle: label not among candidates");

  const int dim = model.cfg.dis_input_dim();
  Tensor<T> x({static_cast<int>(xs.size()), dim});
  for (size_t i = 0; i < xs.size(); ++i) {
    if (static_cast<int>(xs[i].size()) != dim)
      throw std::invalid_argument("disentangle: x_t has wrong dimension");
    for (int j = 0; j < dim; ++j) x.at(static_cast<int>(i), j) = xs[i][j];
  }

  GraphBinding<T> bind(model.params);
  std::vector<int> labels(xs.size(), label);
  auto nll = disentangle_nll(model, bind, head, constant(std::move(x)), candidate_rows, labels);
  auto total = sum_all(nll);
  return forward(total)[0];
}

template <typename T>
int classify_trajectory(const SynPoModel<T>& model, char head,
                        const std::vector<std::vector<T>>& xs,
                        const std::vector<int>& candidate_rows) {
  if (xs.empty()) throw std::invalid_argument("classify_trajectory: empty trajectory");
  if (candidate_rows.empty())
    throw std::invalid_argument("classify_trajectory: no candidate rows");
  const std::string prefix = head == 'g' ? "dis.g" : "dis.h";
  const bool env_side = head == 'g';

  const int c = static_cast<int>(candidate_rows.size());
  std::vector<double> total(c, 0.0);
  std::vector<T> hidden, proj, scores(c), logits(c);
  for (const auto& xt : xs) {
    model.infer_linear(prefix + ".l1", xt, hidden, true);
    model.infer_linear(prefix + ".l2", hidden, proj, false);
    for (int i = 0; i < c; ++i) {
      auto row = model.embedding_row(env_side, candidate_rows[i]);
      T acc = T(0);
      for (int j = 0; j < model.cfg.embed_dim; ++j) acc += proj[j] * row[j];
      logits[i] = acc;
    }
    kernel_softmax_row(logits.data(), scores.data(), c);
    for (int i = 0; i < c; ++i) total[i] += std::log(static_cast<double>(scores[i]));
  }
  int best = 0;
  for (int i = 1; i < c; ++i)
    if (total[i] > total[best]) best = i;
  return candidate_rows[best];
}

template Var<float> disentangle_nll(const SynPoModel<float>&, GraphBinding<float>&, char,
                                    Var<float>, const std::vector<int>&,
                                    const std::vector<int>&);
template Var<double> disentangle_nll(const SynPoModel<double>&, GraphBinding<double>&, char,
                                     Var<double>, const std::vector<int>&,
                                     const std::vector<int>&);
template float disentangle_loss_value(const SynPoModel<float>&, char,
                                      const std::vector<std::vector<float>>&,
                                      const std::vector<int>&, int);
template double disentangle_loss_value(const SynPoModel<double>&, char,
                                       const std::vector<std::vector<double>>&,
                                       const std::vector<int>&, int);
template int classify_trajectory(const SynPoModel<float>&, char,
                                 const std::vector<std::vector<float>>&,
                                 const std::vector<int>&);
template int classify_trajectory(const SynPoModel<double>&, char,
                                 const std::vector<std::vector<double>>&,
                                 const std::vector<int>&);

}  // namespace synpo
