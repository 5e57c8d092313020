#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// Every quantity is an Eigen matrix; vectors are 1 x n rows. A Tape records
// the forward computation, and Tape::backward() propagates the gradient of a
// 1 x 1 root back to every node that requires one. Leaves created with
// Tape::variable() add their gradient into a caller-owned sink matrix, which
// is how parameter gradients leave the tape.

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <vector>

namespace riskid::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Owned constant; never receives a gradient.
  Var constant(Matrix value);
  // Borrowed leaf. `value` must outlive the tape. When `grad_sink` is non-null
  // the leaf's gradient is added into it by backward().
  Var variable(const Matrix& value, Matrix* grad_sink);
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, const std::vector<Var>& parents, Backward backward);

  const Matrix& value(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[v.id()];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  // Gradient of a 1 x 1 root. Sinks receive their leaves' gradients.
  void backward(Var root);
  // Gradient accumulated at `v` by the last backward(); zeros when none reached it.
  Matrix grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* borrowed = nullptr;
    Matrix grad;
    Matrix* sink = nullptr;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Adds a 1 x c row to every row of a.
Var add_row(Var a, Var row);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var hcat(Var a, Var b);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
// Row-wise softmax restricted to entries where mask == 1. Rows with an empty
// mask produce zeros. Each row is shifted by its masked maximum first.
Var masked_row_softmax(Var logits, const Matrix& mask);
// sum_i w_i * row_i / sum_i w_i for constant nonnegative weights.
Var weighted_row_mean(Var rows, const Eigen::VectorXd& weights);
// Elementwise mean of equally shaped values.
Var mean(const std::vector<Var>& xs);
Var sum(Var a);
// -log softmax(logits)[label] for a 1 x C row; returns 1 x 1.
Var softmax_cross_entropy(Var logits, int label);
// Sum of binary cross entropy of probabilities against 0/1 targets.
Var binary_cross_entropy(Var probs, const Matrix& targets);
// Sum of smooth-L1 (Huber with unit transition) against fixed targets.
Var smooth_l1(Var pred, const Matrix& targets);

// Row-wise softmax of a plain matrix.
Matrix softmax_rows(const Matrix& logits);

}  // namespace riskid::ad
