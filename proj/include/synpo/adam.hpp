// Adam optimizer over a ParameterStore. Weight decay is decoupled by default
// (applied directly to the weights, AdamW style); set `decoupled_decay` to
// false to fold it into the gradient instead.
#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "synpo/params.hpp"
#include "synpo/tensor.hpp"

namespace synpo {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  bool decoupled_decay = true;
};

template <typename T>
using GradMap = std::map<std::string, const Tensor<T>*>;

template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return step_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

  // One update. `grads` must cover exactly the trainable parameters; frozen
  // parameters are left byte-identical.
  void step(ParameterStore<T>& params, const GradMap<T>& grads) {
    ++step_;
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(step_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(step_)));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T lr = static_cast<T>(cfg_.learning_rate);
    const T eps = static_cast<T>(cfg_.epsilon);
    const T wd = static_cast<T>(cfg_.weight_decay);

    for (auto& [name, entry] : params.entries()) {
      if (!entry.trainable) continue;
      auto git = grads.find(name);
      if (git == grads.end() || git->second == nullptr)
        throw std::runtime_error("adam_step: missing gradient for trainable parameter " + name);
      const Tensor<T>& g = *git->second;
      Tensor<T>& p = entry.tensor;
      if (!g.same_shape(p))
        throw std::runtime_error("adam_step: gradient shape " + shape_str(g.shape()) +
                                 " does not match parameter " + name + " " +
                                 shape_str(p.shape()));
      Moments& mo = moments_[name];
      if (!mo.m.same_shape(p)) {
        mo.m = Tensor<T>(p.shape());
        mo.v = Tensor<T>(p.shape());
      }
      T* pm = mo.m.data();
      T* pv = mo.v.data();
      T* pp = p.data();
      const T* pg = g.data();
      for (int64_t i = 0; i < p.numel(); ++i) {
        T gi = pg[i];
        if (!cfg_.decoupled_decay && wd != T(0)) gi += wd * pp[i];
        pm[i] = b1 * pm[i] + (T(1) - b1) * gi;
        pv[i] = b2 * pv[i] + (T(1) - b2) * gi * gi;
        const T mhat = pm[i] / bc1;
        const T vhat = pv[i] / bc2;
        if (cfg_.decoupled_decay && wd != T(0)) pp[i] -= lr * wd * pp[i];
        pp[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
      if (!p.all_finite())
        throw std::runtime_error("adam_step: non-finite values in parameter " + name);
    }
  }

 private:
  struct Moments {
    Tensor<T> m, v;
  };

  AdamConfig cfg_;
  int64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace synpo
