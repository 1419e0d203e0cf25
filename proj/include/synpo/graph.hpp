// Reverse-mode automatic differentiation over Tensor<T>. Graphs are built
// symbolically; forward(root) evaluates the whole subgraph (recomputing every
// node, so leaves can be perturbed and re-run), backward(root) propagates
// gradients in reverse topological order exactly once.
//
// Leaves can reference an external tensor (a ParameterStore entry); forward
// snapshots the referenced value, which lets a training loop rebuild nothing
// between optimizer steps.
#pragma once

#include <algorithm>
#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "synpo/tensor.hpp"

namespace synpo {

template <typename T>
class Node;

template <typename T>
using Var = std::shared_ptr<Node<T>>;

namespace detail {

[[noreturn]] inline void op_error(const std::string& op, const std::string& msg) {
  throw std::runtime_error(op + ": " + msg);
}

inline void check_finite_or_throw(const char* op, bool finite) {
  if (!finite) detail::op_error(op, "produced non-finite values");
}

}  // namespace detail

template <typename T>
class Node {
 public:
  virtual ~Node() = default;

  virtual const char* op_name() const = 0;
  virtual void compute() = 0;
  // Accumulate input gradients from this->grad. Only called when evaluated.
  virtual void backprop() = 0;

  std::vector<Var<T>> inputs;
  Tensor<T> value;
  Tensor<T> grad;
  bool evaluated = false;
  bool requires_grad = false;

 protected:
  void init_requires_grad() {
    for (const auto& in : inputs)
      if (in->requires_grad) requires_grad = true;
  }
  void ensure_grad(Node& n) {
    if (!n.requires_grad) return;
    if (!n.grad.same_shape(n.value)) n.grad = Tensor<T>(n.value.shape());
  }
};

// ---------------------------------------------------------------------------
// Leaf
// ---------------------------------------------------------------------------

template <typename T>
class LeafNode final : public Node<T> {
 public:
  LeafNode(Tensor<T> v, bool trainable) : owned_(std::move(v)) {
    this->requires_grad = trainable;
  }
  LeafNode(const Tensor<T>* ref, bool trainable) : ref_(ref) {
    this->requires_grad = trainable;
  }
  const char* op_name() const override { return "leaf"; }
  void compute() override { this->value = ref_ ? *ref_ : owned_; }
  void backprop() override {}

  // Direct access for tests that poke leaf values between forwards.
  Tensor<T>& owned_value() {
    if (ref_) throw std::runtime_error("leaf: external leaves are mutated through their store");
    return owned_;
  }

  const Tensor<T>* external_ref() const { return ref_; }

 private:
  Tensor<T> owned_;
  const Tensor<T>* ref_ = nullptr;
};

template <typename T>
Var<T> leaf(Tensor<T> v, bool trainable = false) {
  return std::make_shared<LeafNode<T>>(std::move(v), trainable);
}

template <typename T>
Var<T> leaf_ref(const Tensor<T>* ref, bool trainable) {
  return std::make_shared<LeafNode<T>>(ref, trainable);
}

template <typename T>
Var<T> constant(Tensor<T> v) {
  return leaf(std::move(v), false);
}

// ---------------------------------------------------------------------------
// Matrix multiply
// ---------------------------------------------------------------------------

template <typename T>
class MatMulNode final : public Node<T> {
 public:
  MatMulNode(Var<T> a, Var<T> b, bool trans_b) : trans_b_(trans_b) {
    this->inputs = {std::move(a), std::move(b)};
    this->init_requires_grad();
  }
  const char* op_name() const override { return "matmul"; }

  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    const Tensor<T>& b = this->inputs[1]->value;
    if (a.rank() != 2 || b.rank() != 2)
      detail::op_error("matmul", "expects matrices, got " + shape_str(a.shape()) + " and " +
                                     shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1);
    const int bk = trans_b_ ? b.dim(1) : b.dim(0);
    const int n = trans_b_ ? b.dim(0) : b.dim(1);
    if (k != bk)
      detail::op_error("matmul", "inner dimensions differ: " + shape_str(a.shape()) +
                                     (trans_b_ ? " x transpose" : " x ") + shape_str(b.shape()));
    this->value = Tensor<T>({m, n});
    if (trans_b_)
      kernel_matmul_nt_acc(a.data(), b.data(), this->value.data(), m, k, n);
    else
      kernel_matmul_acc(a.data(), b.data(), this->value.data(), m, k, n);
  }

  void backprop() override {
    Node<T>&a = *this->inputs[0], &b = *this->inputs[1];
    const int m = a.value.dim(0), k = a.value.dim(1), n = this->value.dim(1);
    this->ensure_grad(a);
    this->ensure_grad(b);
    if (!trans_b_) {
      // dA += G * B^T ; dB += A^T * G
      if (a.requires_grad)
        kernel_matmul_nt_acc(this->grad.data(), b.value.data(), a.grad.data(), m, n, k);
      if (b.requires_grad)
        kernel_matmul_tn_acc(a.value.data(), this->grad.data(), b.grad.data(), m, k, n);
    } else {
      // out = A * B^T with B (n x k): dA += G * B ; dB += G^T * A
      if (a.requires_grad)
        kernel_matmul_acc(this->grad.data(), b.value.data(), a.grad.data(), m, n, k);
      if (b.requires_grad)
        kernel_matmul_tn_acc(this->grad.data(), a.value.data(), b.grad.data(), m, n, k);
    }
  }

 private:
  bool trans_b_;
};

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool trans_b = false) {
  return std::make_shared<MatMulNode<T>>(std::move(a), std::move(b), trans_b);
}

// ---------------------------------------------------------------------------
// Elementwise binary ops with dimension-1 broadcasting (rank <= 4)
// ---------------------------------------------------------------------------

namespace detail {

struct BroadcastPlan {
  std::array<int, 4> out{1, 1, 1, 1};
  std::array<int64_t, 4> astr{0, 0, 0, 0};
  std::array<int64_t, 4> bstr{0, 0, 0, 0};
  Shape out_shape;
};

inline BroadcastPlan broadcast_plan(const char* op, const Shape& a, const Shape& b) {
  if (a.size() > 4 || b.size() > 4) op_error(op, "rank > 4 unsupported");
  BroadcastPlan p;
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  std::array<int, 4> ad{1, 1, 1, 1}, bd{1, 1, 1, 1};
  for (int i = 0; i < ra; ++i) ad[4 - ra + i] = a[i];
  for (int i = 0; i < rb; ++i) bd[4 - rb + i] = b[i];
  for (int i = 0; i < 4; ++i) {
    if (ad[i] != bd[i] && ad[i] != 1 && bd[i] != 1)
      op_error(op, "shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
    p.out[i] = std::max(ad[i], bd[i]);
  }
  int64_t as = 1, bs = 1;
  for (int i = 3; i >= 0; --i) {
    p.astr[i] = (ad[i] == 1) ? 0 : as;
    p.bstr[i] = (bd[i] == 1) ? 0 : bs;
    as *= ad[i];
    bs *= bd[i];
  }
  p.out_shape.assign(p.out.begin() + (4 - r), p.out.end());
  return p;
}

}  // namespace detail

enum class BinaryOp { Add, Mul, SqErr };

template <typename T>
class BinaryNode final : public Node<T> {
 public:
  BinaryNode(Var<T> a, Var<T> b, BinaryOp op) : op_(op) {
    this->inputs = {std::move(a), std::move(b)};
    this->init_requires_grad();
  }
  const char* op_name() const override {
    switch (op_) {
      case BinaryOp::Add: return "add";
      case BinaryOp::Mul: return "mul";
      default: return "squared_error";
    }
  }

  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    const Tensor<T>& b = this->inputs[1]->value;
    plan_ = detail::broadcast_plan(op_name(), a.shape(), b.shape());
    this->value = Tensor<T>(plan_.out_shape);
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = this->value.data();
    int64_t o = 0;
    for (int i0 = 0; i0 < plan_.out[0]; ++i0)
      for (int i1 = 0; i1 < plan_.out[1]; ++i1)
        for (int i2 = 0; i2 < plan_.out[2]; ++i2)
          for (int i3 = 0; i3 < plan_.out[3]; ++i3, ++o) {
            const T va = pa[i0 * plan_.astr[0] + i1 * plan_.astr[1] + i2 * plan_.astr[2] +
                           i3 * plan_.astr[3]];
            const T vb = pb[i0 * plan_.bstr[0] + i1 * plan_.bstr[1] + i2 * plan_.bstr[2] +
                           i3 * plan_.bstr[3]];
            switch (op_) {
              case BinaryOp::Add: po[o] = va + vb; break;
              case BinaryOp::Mul: po[o] = va * vb; break;
              case BinaryOp::SqErr: po[o] = (va - vb) * (va - vb); break;
            }
          }
  }

  void backprop() override {
    Node<T>&a = *this->inputs[0], &b = *this->inputs[1];
    this->ensure_grad(a);
    this->ensure_grad(b);
    const T* pa = a.value.data();
    const T* pb = b.value.data();
    const T* pg = this->grad.data();
    T* ga = a.requires_grad ? a.grad.data() : nullptr;
    T* gb = b.requires_grad ? b.grad.data() : nullptr;
    int64_t o = 0;
    for (int i0 = 0; i0 < plan_.out[0]; ++i0)
      for (int i1 = 0; i1 < plan_.out[1]; ++i1)
        for (int i2 = 0; i2 < plan_.out[2]; ++i2)
          for (int i3 = 0; i3 < plan_.out[3]; ++i3, ++o) {
            const int64_t ia = i0 * plan_.astr[0] + i1 * plan_.astr[1] + i2 * plan_.astr[2] +
                               i3 * plan_.astr[3];
            const int64_t ib = i0 * plan_.bstr[0] + i1 * plan_.bstr[1] + i2 * plan_.bstr[2] +
                               i3 * plan_.bstr[3];
            const T g = pg[o];
            switch (op_) {
              case BinaryOp::Add:
                if (ga) ga[ia] += g;
                if (gb) gb[ib] += g;
                break;
              case BinaryOp::Mul:
                if (ga) ga[ia] += g * pb[ib];
                if (gb) gb[ib] += g * pa[ia];
                break;
              case BinaryOp::SqErr: {
                const T d = T(2) * (pa[ia] - pb[ib]) * g;
                if (ga) ga[ia] += d;
                if (gb) gb[ib] -= d;
                break;
              }
            }
          }
  }

 private:
  BinaryOp op_;
  detail::BroadcastPlan plan_;
};

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return std::make_shared<BinaryNode<T>>(std::move(a), std::move(b), BinaryOp::Add);
}
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return std::make_shared<BinaryNode<T>>(std::move(a), std::move(b), BinaryOp::Mul);
}
template <typename T>
Var<T> squared_error(Var<T> a, Var<T> b) {
  return std::make_shared<BinaryNode<T>>(std::move(a), std::move(b), BinaryOp::SqErr);
}
template <typename T>
Var<T> scale(Var<T> a, T s) {
  return mul(std::move(a), constant(Tensor<T>::scalar(s)));
}

// ---------------------------------------------------------------------------
// Unary ops
// ---------------------------------------------------------------------------

template <typename T>
class ReluNode final : public Node<T> {
 public:
  explicit ReluNode(Var<T> a) {
    this->inputs = {std::move(a)};
    this->init_requires_grad();
  }
  const char* op_name() const override { return "relu"; }
  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    this->value = Tensor<T>(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) this->value[i] = a[i] > T(0) ? a[i] : T(0);
  }
  void backprop() override {
    Node<T>& a = *this->inputs[0];
    if (!a.requires_grad) return;
    this->ensure_grad(a);
    for (int64_t i = 0; i < a.value.numel(); ++i)
      if (a.value[i] > T(0)) a.grad[i] += this->grad[i];
  }
};

template <typename T>
Var<T> relu(Var<T> a) {
  return std::make_shared<ReluNode<T>>(std::move(a));
}

template <typename T>
class LogNode final : public Node<T> {
 public:
  explicit LogNode(Var<T> a) {
    this->inputs = {std::move(a)};
    this->init_requires_grad();
  }
  const char* op_name() const override { return "log"; }
  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    this->value = Tensor<T>(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) this->value[i] = std::log(a[i]);
  }
  void backprop() override {
    Node<T>& a = *this->inputs[0];
    if (!a.requires_grad) return;
    this->ensure_grad(a);
    for (int64_t i = 0; i < a.value.numel(); ++i) a.grad[i] += this->grad[i] / a.value[i];
  }
};

template <typename T>
Var<T> vlog(Var<T> a) {
  return std::make_shared<LogNode<T>>(std::move(a));
}

// Softmax over the last axis (rank 1 or 2).
template <typename T>
class SoftmaxNode final : public Node<T> {
 public:
  explicit SoftmaxNode(Var<T> a) {
    this->inputs = {std::move(a)};
    this->init_requires_grad();
  }
  const char* op_name() const override { return "softmax"; }
  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    if (a.rank() < 1 || a.rank() > 2)
      detail::op_error("softmax", "expects rank 1 or 2, got " + shape_str(a.shape()));
    this->value = Tensor<T>(a.shape());
    const int n = a.dim(a.rank() - 1);
    const int rows = static_cast<int>(a.numel() / n);
    for (int r = 0; r < rows; ++r)
      kernel_softmax_row(a.data() + static_cast<int64_t>(r) * n,
                         this->value.data() + static_cast<int64_t>(r) * n, n);
  }
  void backprop() override {
    Node<T>& a = *this->inputs[0];
    if (!a.requires_grad) return;
    this->ensure_grad(a);
    const int n = a.value.dim(a.value.rank() - 1);
    const int rows = static_cast<int>(a.value.numel() / n);
    for (int r = 0; r < rows; ++r) {
      const T* y = this->value.data() + static_cast<int64_t>(r) * n;
      const T* g = this->grad.data() + static_cast<int64_t>(r) * n;
      T* da = a.grad.data() + static_cast<int64_t>(r) * n;
      T dot = T(0);
      for (int j = 0; j < n; ++j) dot += g[j] * y[j];
      for (int j = 0; j < n; ++j) da[j] += y[j] * (g[j] - dot);
    }
  }
};

template <typename T>
Var<T> softmax(Var<T> a) {
  return std::make_shared<SoftmaxNode<T>>(std::move(a));
}

// Fused log(softmax(x)) over the last axis. Mathematically the composition
// of the two ops; fused so that entries far below the row maximum come out
// as large negative values instead of log(0).
template <typename T>
class LogSoftmaxNode final : public Node<T> {
 public:
  explicit LogSoftmaxNode(Var<T> a) {
    this->inputs = {std::move(a)};
    this->init_requires_grad();
  }
  const char* op_name() const override { return "log_softmax"; }
  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    if (a.rank() < 1 || a.rank() > 2)
      detail::op_error("log_softmax", "expects rank 1 or 2, got " + shape_str(a.shape()));
    this->value = Tensor<T>(a.shape());
    const int n = a.dim(a.rank() - 1);
    const int rows = static_cast<int>(a.numel() / n);
    for (int r = 0; r < rows; ++r) {
      const T* in = a.data() + static_cast<int64_t>(r) * n;
      T* out = this->value.data() + static_cast<int64_t>(r) * n;
      T mx = in[0];
      for (int j = 1; j < n; ++j) mx = std::max(mx, in[j]);
      T z = T(0);
      for (int j = 0; j < n; ++j) z += std::exp(in[j] - mx);
      const T logz = std::log(z);
      for (int j = 0; j < n; ++j) out[j] = in[j] - mx - logz;
    }
  }
  void backprop() override {
    Node<T>& a = *this->inputs[0];
    if (!a.requires_grad) return;
    this->ensure_grad(a);
    const int n = a.value.dim(a.value.rank() - 1);
    const int rows = static_cast<int>(a.value.numel() / n);
    for (int r = 0; r < rows; ++r) {
      const T* out = this->value.data() + static_cast<int64_t>(r) * n;
      const T* g = this->grad.data() + static_cast<int64_t>(r) * n;
      T* da = a.grad.data() + static_cast<int64_t>(r) * n;
      T gsum = T(0);
      for (int j = 0; j < n; ++j) gsum += g[j];
      for (int j = 0; j < n; ++j) da[j] += g[j] - std::exp(out[j]) * gsum;
    }
  }
};

template <typename T>
Var<T> log_softmax(Var<T> a) {
  return std::make_shared<LogSoftmaxNode<T>>(std::move(a));
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
class ReshapeNode final : public Node<T> {
 public:
  ReshapeNode(Var<T> a, Shape shape) : shape_(std::move(shape)) {
    this->inputs = {std::move(a)};
    this->init_requires_grad();
  }
  const char* op_name() const override { return "reshape"; }
  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    // One dimension may be -1 and is inferred from the element count.
    Shape resolved = shape_;
    int64_t known = 1, infer_at = -1;
    for (size_t i = 0; i < resolved.size(); ++i) {
      if (resolved[i] == -1) {
        if (infer_at >= 0) detail::op_error("reshape", "more than one inferred dimension");
        infer_at = static_cast<int64_t>(i);
      } else {
        known *= resolved[i];
      }
    }
    if (infer_at >= 0) {
      if (known == 0 || a.numel() % known != 0)
        detail::op_error("reshape", "cannot infer dimension reshaping " + shape_str(a.shape()) +
                                        " to " + shape_str(shape_));
      resolved[infer_at] = static_cast<int>(a.numel() / known);
    }
    if (shape_numel(resolved) != a.numel())
      detail::op_error("reshape", "cannot reshape " + shape_str(a.shape()) + " to " +
                                      shape_str(shape_));
    this->value = Tensor<T>(resolved, std::vector<T>(a.flat().begin(), a.flat().end()));
  }
  void backprop() override {
    Node<T>& a = *this->inputs[0];
    if (!a.requires_grad) return;
    this->ensure_grad(a);
    for (int64_t i = 0; i < a.value.numel(); ++i) a.grad[i] += this->grad[i];
  }

 private:
  Shape shape_;
};

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  return std::make_shared<ReshapeNode<T>>(std::move(a), std::move(shape));
}

// Permutation of a rank-3 tensor's axes.
template <typename T>
class Permute3Node final : public Node<T> {
 public:
  Permute3Node(Var<T> a, std::array<int, 3> perm) : perm_(perm) {
    this->inputs = {std::move(a)};
    this->init_requires_grad();
  }
  const char* op_name() const override { return "permute3"; }
  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    if (a.rank() != 3) detail::op_error("permute3", "expects rank 3, got " + shape_str(a.shape()));
    const Shape& s = a.shape();
    this->value = Tensor<T>({s[perm_[0]], s[perm_[1]], s[perm_[2]]});
    int idx[3];
    for (idx[0] = 0; idx[0] < s[0]; ++idx[0])
      for (idx[1] = 0; idx[1] < s[1]; ++idx[1])
        for (idx[2] = 0; idx[2] < s[2]; ++idx[2])
          this->value.at(idx[perm_[0]], idx[perm_[1]], idx[perm_[2]]) =
              a.at(idx[0], idx[1], idx[2]);
  }
  void backprop() override {
    Node<T>& a = *this->inputs[0];
    if (!a.requires_grad) return;
    this->ensure_grad(a);
    const Shape& s = a.value.shape();
    int idx[3];
    for (idx[0] = 0; idx[0] < s[0]; ++idx[0])
      for (idx[1] = 0; idx[1] < s[1]; ++idx[1])
        for (idx[2] = 0; idx[2] < s[2]; ++idx[2])
          a.grad.at(idx[0], idx[1], idx[2]) +=
              this->grad.at(idx[perm_[0]], idx[perm_[1]], idx[perm_[2]]);
  }

 private:
  std::array<int, 3> perm_;
};

template <typename T>
Var<T> permute3(Var<T> a, int p0, int p1, int p2) {
  return std::make_shared<Permute3Node<T>>(std::move(a), std::array<int, 3>{p0, p1, p2});
}

// Concatenation along axis 0 or 1 (rank 1 treated as a single row).
template <typename T>
class ConcatNode final : public Node<T> {
 public:
  ConcatNode(std::vector<Var<T>> parts, int axis) : axis_(axis) {
    if (parts.empty()) detail::op_error("concat", "needs at least one input");
    this->inputs = std::move(parts);
    this->init_requires_grad();
  }
  const char* op_name() const override { return "concat"; }

  void compute() override {
    const int r = this->inputs[0]->value.rank();
    if (r > 2 || axis_ >= r)
      detail::op_error("concat", "axis " + std::to_string(axis_) + " invalid for rank " +
                                     std::to_string(r));
    if (r == 1) {
      int64_t n = 0;
      for (auto& in : this->inputs) n += in->value.numel();
      this->value = Tensor<T>({static_cast<int>(n)});
      int64_t o = 0;
      for (auto& in : this->inputs)
        for (int64_t i = 0; i < in->value.numel(); ++i) this->value[o++] = in->value[i];
      return;
    }
    int rows = 0, cols = 0;
    for (auto& in : this->inputs) {
      const Tensor<T>& v = in->value;
      if (v.rank() != 2) detail::op_error("concat", "mixed ranks");
      if (axis_ == 0) {
        if (cols && v.dim(1) != cols) detail::op_error("concat", "column mismatch");
        cols = v.dim(1);
        rows += v.dim(0);
      } else {
        if (rows && v.dim(0) != rows) detail::op_error("concat", "row mismatch");
        rows = v.dim(0);
        cols += v.dim(1);
      }
    }
    this->value = Tensor<T>({rows, cols});
    if (axis_ == 0) {
      int64_t o = 0;
      for (auto& in : this->inputs)
        for (int64_t i = 0; i < in->value.numel(); ++i) this->value[o++] = in->value[i];
    } else {
      int coff = 0;
      for (auto& in : this->inputs) {
        const Tensor<T>& v = in->value;
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < v.dim(1); ++j) this->value.at(i, coff + j) = v.at(i, j);
        coff += v.dim(1);
      }
    }
  }

  void backprop() override {
    if (this->value.rank() == 1 || axis_ == 0) {
      int64_t o = 0;
      for (auto& in : this->inputs) {
        this->ensure_grad(*in);
        for (int64_t i = 0; i < in->value.numel(); ++i, ++o)
          if (in->requires_grad) in->grad[i] += this->grad[o];
      }
      return;
    }
    const int rows = this->value.dim(0);
    int coff = 0;
    for (auto& in : this->inputs) {
      this->ensure_grad(*in);
      const int c = in->value.dim(1);
      if (in->requires_grad)
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < c; ++j) in->grad.at(i, j) += this->grad.at(i, coff + j);
      coff += c;
    }
  }

 private:
  int axis_;
};

template <typename T>
Var<T> concat(std::vector<Var<T>> parts, int axis) {
  return std::make_shared<ConcatNode<T>>(std::move(parts), axis);
}

// Identity forward that blocks the reverse pass.
template <typename T>
class StopGradientNode final : public Node<T> {
 public:
  explicit StopGradientNode(Var<T> a) {
    this->inputs = {std::move(a)};
    this->requires_grad = false;
  }
  const char* op_name() const override { return "stop_gradient"; }
  void compute() override { this->value = this->inputs[0]->value; }
  void backprop() override {}
};

template <typename T>
Var<T> stop_gradient(Var<T> a) {
  return std::make_shared<StopGradientNode<T>>(std::move(a));
}

// Row gather (embedding lookup): out[r, :] = in[idx[r], :].
template <typename T>
class GatherNode final : public Node<T> {
 public:
  GatherNode(Var<T> a, std::vector<int> idx) : idx_(std::move(idx)) {
    this->inputs = {std::move(a)};
    this->init_requires_grad();
  }
  const char* op_name() const override { return "gather"; }
  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    if (a.rank() != 2) detail::op_error("gather", "expects a matrix, got " + shape_str(a.shape()));
    const int cols = a.dim(1);
    for (int i : idx_)
      if (i < 0 || i >= a.dim(0))
        detail::op_error("gather", "row index " + std::to_string(i) + " out of range for " +
                                       shape_str(a.shape()));
    this->value = Tensor<T>({static_cast<int>(idx_.size()), cols});
    for (size_t r = 0; r < idx_.size(); ++r)
      for (int j = 0; j < cols; ++j) this->value.at(static_cast<int>(r), j) = a.at(idx_[r], j);
  }
  void backprop() override {
    Node<T>& a = *this->inputs[0];
    if (!a.requires_grad) return;
    this->ensure_grad(a);
    const int cols = a.value.dim(1);
    for (size_t r = 0; r < idx_.size(); ++r)
      for (int j = 0; j < cols; ++j) a.grad.at(idx_[r], j) += this->grad.at(static_cast<int>(r), j);
  }

 private:
  std::vector<int> idx_;
};

template <typename T>
Var<T> gather(Var<T> a, std::vector<int> idx) {
  return std::make_shared<GatherNode<T>>(std::move(a), std::move(idx));
}

// Select one entry per row of a matrix: out[r] = in[r, col[r]].
template <typename T>
class PickNode final : public Node<T> {
 public:
  PickNode(Var<T> a, std::vector<int> col) : col_(std::move(col)) {
    this->inputs = {std::move(a)};
    this->init_requires_grad();
  }
  const char* op_name() const override { return "pick"; }
  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    if (a.rank() != 2) detail::op_error("pick", "expects a matrix, got " + shape_str(a.shape()));
    if (static_cast<int>(col_.size()) != a.dim(0))
      detail::op_error("pick", "needs one column index per row");
    this->value = Tensor<T>({a.dim(0), 1});
    for (int r = 0; r < a.dim(0); ++r) {
      if (col_[r] < 0 || col_[r] >= a.dim(1))
        detail::op_error("pick", "column index out of range");
      this->value[r] = a.at(r, col_[r]);
    }
  }
  void backprop() override {
    Node<T>& a = *this->inputs[0];
    if (!a.requires_grad) return;
    this->ensure_grad(a);
    for (int r = 0; r < a.value.dim(0); ++r) a.grad.at(r, col_[r]) += this->grad[r];
  }

 private:
  std::vector<int> col_;
};

template <typename T>
Var<T> pick_entries(Var<T> a, std::vector<int> col) {
  return std::make_shared<PickNode<T>>(std::move(a), std::move(col));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
class ReduceNode final : public Node<T> {
 public:
  // axis = -1 reduces everything to a scalar.
  ReduceNode(Var<T> a, int axis, bool mean) : axis_(axis), mean_(mean) {
    this->inputs = {std::move(a)};
    this->init_requires_grad();
  }
  const char* op_name() const override { return mean_ ? "mean" : "sum"; }

  void compute() override {
    const Tensor<T>& a = this->inputs[0]->value;
    if (axis_ == -1) {
      T acc = T(0);
      for (int64_t i = 0; i < a.numel(); ++i) acc += a[i];
      if (mean_ && a.numel() > 0) acc /= static_cast<T>(a.numel());
      this->value = Tensor<T>::scalar(acc);
      return;
    }
    if (axis_ < 0 || axis_ >= a.rank())
      detail::op_error(op_name(), "axis " + std::to_string(axis_) + " out of range for " +
                                      shape_str(a.shape()));
    Shape os;
    for (int i = 0; i < a.rank(); ++i)
      if (i != axis_) os.push_back(a.dim(i));
    if (os.empty()) os.push_back(1);
    this->value = Tensor<T>(os);
    strides(a.shape());
    const T scale = mean_ ? T(1) / static_cast<T>(a.dim(axis_)) : T(1);
    for (int64_t o = 0; o < this->value.numel(); ++o) {
      const int64_t base = out_to_in_base(o, a.shape());
      T acc = T(0);
      for (int j = 0; j < a.dim(axis_); ++j) acc += a[base + j * stride_axis_];
      this->value[o] = acc * scale;
    }
  }

  void backprop() override {
    Node<T>& a = *this->inputs[0];
    if (!a.requires_grad) return;
    this->ensure_grad(a);
    const Tensor<T>& av = a.value;
    if (axis_ == -1) {
      const T g = this->grad[0] * (mean_ ? T(1) / static_cast<T>(av.numel()) : T(1));
      for (int64_t i = 0; i < av.numel(); ++i) a.grad[i] += g;
      return;
    }
    const T scale = mean_ ? T(1) / static_cast<T>(av.dim(axis_)) : T(1);
    for (int64_t o = 0; o < this->value.numel(); ++o) {
      const int64_t base = out_to_in_base(o, av.shape());
      const T g = this->grad[o] * scale;
      for (int j = 0; j < av.dim(axis_); ++j) a.grad[base + j * stride_axis_] += g;
    }
  }

 private:
  void strides(const Shape& s) {
    in_strides_.assign(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
      in_strides_[i] = in_strides_[i + 1] * s[i + 1];
    stride_axis_ = in_strides_[axis_];
  }
  int64_t out_to_in_base(int64_t o, const Shape& s) const {
    // Decompose the output flat index over the non-reduced axes.
    int64_t base = 0, rem = o;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
      if (i == axis_) continue;
      base += (rem % s[i]) * in_strides_[i];
      rem /= s[i];
    }
    return base;
  }

  int axis_;
  bool mean_;
  std::vector<int64_t> in_strides_;
  int64_t stride_axis_ = 1;
};

template <typename T>
Var<T> sum_all(Var<T> a) {
  return std::make_shared<ReduceNode<T>>(std::move(a), -1, false);
}
template <typename T>
Var<T> mean_all(Var<T> a) {
  return std::make_shared<ReduceNode<T>>(std::move(a), -1, true);
}
template <typename T>
Var<T> sum_axis(Var<T> a, int axis) {
  return std::make_shared<ReduceNode<T>>(std::move(a), axis, false);
}
template <typename T>
Var<T> mean_axis(Var<T> a, int axis) {
  return std::make_shared<ReduceNode<T>>(std::move(a), axis, true);
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

template <typename T>
std::vector<Node<T>*> topo_order(const Var<T>& root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  // Iterative post-order DFS; input order fixes the traversal, so the
  // resulting schedule is deterministic.
  std::vector<std::pair<Node<T>*, size_t>> stack{{root.get(), 0}};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next == 0 && seen.count(node)) {
      stack.pop_back();
      continue;
    }
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (!seen.count(child)) stack.emplace_back(child, 0);
    } else {
      if (!seen.count(node)) {
        seen.insert(node);
        order.push_back(node);
      }
      stack.pop_back();
    }
  }
  return order;
}

// Evaluate the subgraph under root. Recomputes every node so that leaf
// mutations (optimizer steps, finite-difference probes) are picked up.
template <typename T>
const Tensor<T>& forward(const Var<T>& root) {
  for (Node<T>* n : topo_order(root)) {
    n->compute();
    n->evaluated = true;
    detail::check_finite_or_throw(n->op_name(), n->value.all_finite());
  }
  return root->value;
}

// Reverse pass from a scalar root. Each node is visited exactly once, in
// reverse topological order; gradients land on every leaf that requires them.
template <typename T>
void backward(const Var<T>& root) {
  if (!root->evaluated) throw std::runtime_error("backward: forward has not been run");
  if (root->value.numel() != 1)
    throw std::runtime_error("backward: root must be scalar, got " +
                             shape_str(root->value.shape()));
  auto order = topo_order(root);
  for (Node<T>* n : order) {
    if (n->requires_grad) {
      n->grad = Tensor<T>(n->value.shape());
    } else {
      n->grad = Tensor<T>();
    }
  }
  root->grad = Tensor<T>(root->value.shape(), std::vector<T>{T(1)});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->requires_grad && !n->inputs.empty()) n->backprop();
  }
}

}  // namespace synpo
