#include "riskid/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace riskid::ad {

Var Tape::constant(Matrix value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(const Matrix& value, Matrix* grad_sink) {
  Node node;
  node.borrowed = &value;
  node.sink = grad_sink;
  node.requires_grad = grad_sink != nullptr;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Backward backward) {
  Node node;
  node.owned = std::move(value);
  for (Var p : parents) {
    assert(p.tape() == this);
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.owned;
}

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("backward: root must be 1 x 1");
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  accumulate(root, Matrix::Ones(1, 1));
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.sink) *n.sink += n.grad;
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(value(v.id()).rows(), value(v.id()).cols());
  return n.grad;
}

Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(a.value() * b.value().transpose(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value());
    if (t.requires_grad(b)) t.accumulate(b, g.transpose() * a.value());
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = *a.tape();
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return t.record(std::move(v), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var mul(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var relu(Var a) {
  Tape& t = *a.tape();
  return t.record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  Matrix v = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  return t.record(v, {a}, [a, v](Tape& t, const Matrix& g) {
    t.accumulate(a, (g.array() * v.array() * (1.0 - v.array())).matrix());
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape();
  Matrix v = a.value().array().tanh().matrix();
  return t.record(v, {a}, [a, v](Tape& t, const Matrix& g) {
    t.accumulate(a, (g.array() * (1.0 - v.array().square())).matrix());
  });
}

Var hcat(Var a, Var b) {
  Tape& t = *a.tape();
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Eigen::Index ca = a.cols();
  const Eigen::Index cb = b.cols();
  return t.record(std::move(v), {a, b}, [a, b, ca, cb](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.leftCols(ca));
    if (t.requires_grad(b)) t.accumulate(b, g.rightCols(cb));
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape();
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  return t.record(a.value().middleCols(start, count), {a},
                  [a, start, count, rows, cols](Tape& t, const Matrix& g) {
                    Matrix full = Matrix::Zero(rows, cols);
                    full.middleCols(start, count) = g;
                    t.accumulate(a, full);
                  });
}

Var masked_row_softmax(Var logits, const Matrix& mask) {
  Tape& t = *logits.tape();
  const Matrix& x = logits.value();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (mask(i, j) != 0.0) mx = std::max(mx, x(i, j));
    }
    if (!std::isfinite(mx)) continue;
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (mask(i, j) != 0.0) {
        out(i, j) = std::exp(x(i, j) - mx);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  Matrix a = out;
  return t.record(std::move(out), {logits}, [logits, a](Tape& t, const Matrix& g) {
    // Masked entries of `a` are exactly zero, so they receive zero gradient.
    Matrix dx = a.cwiseProduct(g);
    const Eigen::VectorXd row_dot = dx.rowwise().sum();
    dx -= a.cwiseProduct(row_dot.replicate(1, a.cols()));
    t.accumulate(logits, dx);
  });
}

Var weighted_row_mean(Var rows, const Eigen::VectorXd& weights) {
  Tape& t = *rows.tape();
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::invalid_argument("weighted_row_mean: weights sum to zero");
  const Eigen::VectorXd w = weights / total;
  Matrix v = Matrix::Zero(1, rows.cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] != 0.0) v += w[i] * rows.value().row(i);
  }
  return t.record(std::move(v), {rows}, [rows, w](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(rows.rows(), rows.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (w[i] != 0.0) d.row(i) = w[i] * g.row(0);
    }
    t.accumulate(rows, d);
  });
}

Var mean(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty input");
  Tape& t = *xs.front().tape();
  Matrix v = xs.front().value();
  for (std::size_t i = 1; i < xs.size(); ++i) v += xs[i].value();
  const double inv = 1.0 / static_cast<double>(xs.size());
  v *= inv;
  return t.record(std::move(v), xs, [xs, inv](Tape& t, const Matrix& g) {
    for (Var x : xs) t.accumulate(x, g * inv);
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  return t.record(std::move(v), {a}, [a, r, c](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var softmax_cross_entropy(Var logits, int label) {
  Tape& t = *logits.tape();
  const Matrix p = softmax_rows(logits.value());
  const Eigen::RowVectorXd x = logits.value().row(0);
  const double mx = x.maxCoeff();
  const double lse = mx + std::log((x.array() - mx).exp().sum());
  Matrix v(1, 1);
  v(0, 0) = lse - x[label];
  return t.record(std::move(v), {logits}, [logits, p, label](Tape& t, const Matrix& g) {
    Matrix d = p;
    d(0, label) -= 1.0;
    t.accumulate(logits, d * g(0, 0));
  });
}

Var binary_cross_entropy(Var probs, const Matrix& targets) {
  Tape& t = *probs.tape();
  const Matrix& p = probs.value();
  // Branch on the 0/1 target so a confident correct prediction stays finite.
  const auto on = targets.array() > 0.5;
  Matrix v(1, 1);
  v(0, 0) = -on.select(p.array().log(), (1.0 - p.array()).log()).sum();
  return t.record(std::move(v), {probs}, [probs, targets](Tape& t, const Matrix& g) {
    const auto& p = probs.value().array();
    const Matrix d = (targets.array() > 0.5).select(-1.0 / p, 1.0 / (1.0 - p)).matrix();
    t.accumulate(probs, d * g(0, 0));
  });
}

Var smooth_l1(Var pred, const Matrix& targets) {
  Tape& t = *pred.tape();
  const Matrix diff = pred.value() - targets;
  const Matrix ad = diff.cwiseAbs();
  Matrix v(1, 1);
  v(0, 0) = (ad.array() < 1.0).select(0.5 * diff.array().square(), ad.array() - 0.5).sum();
  return t.record(std::move(v), {pred}, [pred, diff, ad](Tape& t, const Matrix& g) {
    const Matrix d = (ad.array() < 1.0).select(diff.array(), diff.array().sign()).matrix();
    t.accumulate(pred, d * g(0, 0));
  });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace riskid::ad
