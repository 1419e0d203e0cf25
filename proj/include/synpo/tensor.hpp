// Minimal dense tensor plus the raw compute kernels shared by the autodiff
// graph and the inference-only fast paths. Keeping one kernel per operation
// guarantees bit-identical results between the two paths (same accumulation
// order everywhere).
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "synpo/rng.hpp"

namespace synpo {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
      throw std::invalid_argument("tensor data length does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[i]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> flat() { return std::span<T>(data_); }
  std::span<const T> flat() const { return std::span<const T>(data_); }

  T& operator[](int64_t i) { return data_[i]; }
  T operator[](int64_t i) const { return data_[i]; }

  T& at(int r, int c) { return data_[static_cast<int64_t>(r) * shape_[1] + c]; }
  T at(int r, int c) const { return data_[static_cast<int64_t>(r) * shape_[1] + c]; }
  T& at(int i, int j, int k) {
    return data_[(static_cast<int64_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  T at(int i, int j, int k) const {
    return data_[(static_cast<int64_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (T& v : data_) v = static_cast<T>(rng.uniform(lo, hi));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// ---------------------------------------------------------------------------
// Kernels. All matrices are row-major. Accumulation over the contraction
// index is always in ascending order so results do not depend on which code
// path invoked the kernel.
// ---------------------------------------------------------------------------

// out(m x n) += a(m x k) * b(k x n). Skips zero entries of `a`; the stacked
// gridworld observations are ~98% zeros, which makes the first dense layer
// effectively sparse at no cost to the general case.
template <typename T>
void kernel_matmul_acc(const T* a, const T* b, T* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<int64_t>(i) * k;
    T* orow = out + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out(m x n) += a(m x k) * b(n x k)^T
template <typename T>
void kernel_matmul_nt_acc(const T* a, const T* b, T* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<int64_t>(i) * k;
    T* orow = out + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<int64_t>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      orow[j] += acc;
    }
  }
}

// out(k x n) += a(m x k)^T * b(m x n). Skips zeros of `a` (gradient of the
// weight in x*W when x is sparse).
template <typename T>
void kernel_matmul_tn_acc(const T* a, const T* b, T* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<int64_t>(i) * k;
    const T* brow = b + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* orow = out + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// Row-wise softmax with max subtraction, out may alias nothing.
template <typename T>
void kernel_softmax_row(const T* in, T* out, int n) {
  T mx = in[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, in[j]);
  T sum = T(0);
  for (int j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  const T inv = T(1) / sum;
  for (int j = 0; j < n; ++j) out[j] *= inv;
}

}  // namespace synpo
