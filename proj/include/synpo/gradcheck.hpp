// Central finite-difference verification of analytic gradients. Test-side
// oracle: it consumes only the public graph interface and stays independent
// of the backward pass it checks.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "synpo/graph.hpp"
#include "synpo/params.hpp"

namespace synpo {

// Builds a scalar-valued graph whose trainable leaves are bound to `point`
// through leaf_ref, so in-place perturbations of the store are picked up by
// the next forward().
template <typename T>
using GraphBuilder = std::function<Var<T>(ParameterStore<T>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  int64_t worst_index = -1;
};

template <typename T>
GradCheckReport grad_check_report(const GraphBuilder<T>& build, ParameterStore<T>& point,
                                  double eps = 1e-5) {
  static_assert(std::is_same_v<T, double>, "grad_check runs in 64-bit mode");
  Var<T> root = build(point);
  forward(root);
  if (root->value.numel() != 1)
    throw std::runtime_error("grad_check: function must be scalar-valued, got " +
                             shape_str(root->value.shape()));
  backward(root);

  // Snapshot the analytic gradient of each trainable store tensor. A tensor
  // may be bound through several leaves; their gradients add.
  std::map<const Tensor<T>*, Tensor<T>> leaf_grads;
  for (Node<T>* n : topo_order(root)) {
    auto* lf = dynamic_cast<LeafNode<T>*>(n);
    if (!lf || !lf->external_ref() || !n->requires_grad) continue;
    auto [it, inserted] = leaf_grads.emplace(lf->external_ref(), n->grad);
    if (!inserted)
      for (int64_t i = 0; i < n->grad.numel(); ++i) it->second[i] += n->grad[i];
  }

  // Parameters the function never touches have identically zero gradients on
  // both sides; only bound ones need probing.
  std::map<std::string, Tensor<T>> analytic;
  for (const auto& [name, e] : point.entries()) {
    if (!e.trainable) continue;
    auto it = leaf_grads.find(&e.tensor);
    if (it != leaf_grads.end()) analytic[name] = it->second;
  }

  GradCheckReport report;
  for (auto& [name, e] : point.entries()) {
    if (!e.trainable || !analytic.count(name)) continue;
    Tensor<T>& p = e.tensor;
    const Tensor<T>& an = analytic[name];
    for (int64_t i = 0; i < p.numel(); ++i) {
      const T saved = p[i];
      p[i] = saved + static_cast<T>(eps);
      const double fplus = static_cast<double>(forward(root)[0]);
      p[i] = saved - static_cast<T>(eps);
      const double fminus = static_cast<double>(forward(root)[0]);
      p[i] = saved;
      const double fd = (fplus - fminus) / (2.0 * eps);
      const double av = static_cast<double>(an[i]);
      const double rel =
          std::abs(fd - av) / std::max({1.0, std::abs(fd), std::abs(av)});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = name;
        report.worst_index = i;
      }
    }
  }
  // Leave the graph evaluated at the unperturbed point.
  forward(root);
  return report;
}

template <typename T>
double grad_check(const GraphBuilder<T>& build, ParameterStore<T>& point, double eps = 1e-5) {
  return grad_check_report(build, point, eps).max_rel_error;
}

}  // namespace synpo
