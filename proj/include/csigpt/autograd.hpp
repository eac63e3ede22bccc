#pragma once

// Reverse-mode differentiation over dense double matrices.
//
// A Tape records one forward pass as a flat list of nodes in creation order,
// which is already a topological order, so backward() is a single reverse
// sweep. Nodes that do not depend on any gradient-requiring leaf are never
// visited during backward; freezing a parameter therefore also removes the
// cost of differentiating through the layers upstream of it.

#include "csigpt/core.hpp"

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace csigpt {
struct Parameter;
}

namespace csigpt::ag {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Matrix& grad)>;

  // With grad_enabled = false every leaf is treated as a constant, so a pure
  // inference pass records no backward closures.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {
    nodes_.reserve(512);
  }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Leaf reading the parameter's value in place. Gradients are accumulated
  // straight into `p.grad` when `p.requires_grad` is set.
  Var parameter(Parameter& p);
  // Leaf with an explicit gradient sink (may be null for no gradient).
  Var variable(const Matrix& value, Matrix* grad_sink);

  // Record a derived node. `fn` is invoked at most once during backward with
  // the accumulated gradient of this node and must call accumulate() on its
  // parents.
  Var push(Matrix value, bool requires_grad, Backprop fn);

  void backward(const Var& root, double seed = 1.0);

  const Matrix& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(int id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }
  void accumulate(int id, const Matrix& g);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    Matrix* sink = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

// Precomputed index structure for attention over non-overlapping windows.
// Rows of the attention input must already be grouped window by window.
struct WindowLayout {
  int n_windows = 0;
  int tokens = 0;  // tokens per window
  // tokens*tokens entries indexing rows of the relative-position bias table.
  std::vector<int> rel_index;
  int rel_table_rows = 0;
  // Either empty or one tokens x tokens additive mask per window.
  std::vector<Matrix> masks;
};

// --- elementwise / structural ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard
Var scale(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // broadcast a 1 x C row over rows
Var matmul(const Var& a, const Var& b);
Var linear(const Var& x, const Var& weight, const Var& bias);  // x W + b
Var linear(const Var& x, const Var& weight);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
// out(i, j) = flat(a)[index[i * cols + j]] with row-major flattening of `a`.
// Gradient scatters back; indices may repeat.
Var gather(const Var& a, Eigen::Index rows, Eigen::Index cols,
           std::shared_ptr<const std::vector<int>> index);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);  // row-major

// --- nonlinearities ---
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.01);
// Values outside [lo, hi] are clamped and receive zero gradient.
Var clamp(const Var& a, double lo, double hi);

// --- reductions ---
Var sum(const Var& a);
Var sum_squares(const Var& a);

// Per-row layer normalization with learned 1 x C gain and bias.
Var layer_norm(const Var& x, const Var& gain, const Var& bias,
               double eps = 1e-5);

// Multi-head self-attention inside windows. `qkv` is T x 3C laid out as
// [Q | K | V]; output is T x C. `rel_bias` (rel_table_rows x heads) may be an
// invalid Var to disable relative position bias.
Var window_attention(const Var& qkv, int heads,
                     std::shared_ptr<const WindowLayout> layout,
                     const Var& rel_bias);

}  // namespace csigpt::ag
