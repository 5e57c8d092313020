#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "riskid/autodiff.hpp"

using namespace riskid;
using ad::Matrix;

namespace {

Matrix random_matrix(std::mt19937_64& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

using Graph = std::function<ad::Var(ad::Tape&, ad::Var)>;

// Max relative error between the tape gradient and central differences.
double grad_error(const Graph& f, Matrix x) {
  ad::Tape tape;
  Matrix sink = Matrix::Zero(x.rows(), x.cols());
  ad::Var root = f(tape, tape.variable(x, &sink));
  tape.backward(root);
  double worst = 0.0;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    ad::Tape up;
    const double fu = f(up, up.constant(x)).value()(0, 0);
    x.data()[i] = saved - h;
    ad::Tape down;
    const double fd = f(down, down.constant(x)).value()(0, 0);
    x.data()[i] = saved;
    const double num = (fu - fd) / (2 * h);
    const double err = std::abs(num - sink.data()[i]) / std::max(1.0, std::abs(num) + std::abs(sink.data()[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise and linear ops differentiate correctly") {
  std::mt19937_64 rng(11);
  const Matrix w = random_matrix(rng, 4, 3);
  const Matrix b = random_matrix(rng, 1, 3);
  const Matrix other = random_matrix(rng, 2, 4);
  const Matrix x = random_matrix(rng, 2, 4);

  CHECK(grad_error([&](ad::Tape& t, ad::Var v) { return ad::sum(ad::matmul(v, t.constant(w))); }, x) < 1e-7);
  CHECK(grad_error([&](ad::Tape& t, ad::Var v) { return ad::sum(ad::matmul_nt(v, t.constant(other))); }, x) < 1e-7);
  CHECK(grad_error([&](ad::Tape& t, ad::Var v) { return ad::sum(ad::matmul_nt(t.constant(other), v)); }, x) < 1e-7);
  CHECK(grad_error([&](ad::Tape& t, ad::Var v) {
          return ad::sum(ad::sigmoid(ad::add_row(ad::matmul(v, t.constant(w)), t.constant(b))));
        }, x) < 1e-7);
  CHECK(grad_error([&](ad::Tape&, ad::Var v) { return ad::sum(ad::mul(ad::tanh(v), ad::scale(v, 3.0))); }, x) <
        1e-7);
  CHECK(grad_error([&](ad::Tape& t, ad::Var v) { return ad::sum(ad::relu(ad::sub(v, t.constant(other)))); }, x) <
        1e-7);
  CHECK(grad_error([&](ad::Tape&, ad::Var v) {
          return ad::sum(ad::mul(ad::hcat(v, ad::slice_cols(v, 1, 2)), ad::hcat(v, ad::slice_cols(v, 0, 2))));
        }, x) < 1e-7);
}

TEST_CASE("softmax, pooling and losses differentiate correctly") {
  std::mt19937_64 rng(12);
  const Matrix x = random_matrix(rng, 4, 4, -2.0, 2.0);
  Matrix mask = Matrix::Ones(4, 4);
  mask.row(2).setZero();
  mask.col(2).setZero();
  const Matrix weights = random_matrix(rng, 4, 4);
  Eigen::VectorXd presence(4);
  presence << 1, 0, 1, 1;

  CHECK(grad_error([&](ad::Tape& t, ad::Var v) {
          return ad::sum(ad::mul(ad::masked_row_softmax(v, mask), t.constant(weights)));
        }, x) < 1e-7);
  CHECK(grad_error([&](ad::Tape& t, ad::Var v) {
          return ad::sum(ad::mul(ad::weighted_row_mean(v, presence), t.constant(weights.row(0))));
        }, x) < 1e-7);
  CHECK(grad_error([&](ad::Tape&, ad::Var v) { return ad::sum(ad::mean({v, ad::scale(v, 2.0), ad::relu(v)})); }, x) <
        1e-6);

  const Matrix logits = random_matrix(rng, 1, 3, -2.0, 2.0);
  CHECK(grad_error([&](ad::Tape&, ad::Var v) { return ad::softmax_cross_entropy(v, 1); }, logits) < 1e-7);

  const Matrix probs = random_matrix(rng, 1, 5, 0.05, 0.95);
  Matrix targets(1, 5);
  targets << 1, 0, 0, 1, 1;
  CHECK(grad_error([&](ad::Tape&, ad::Var v) { return ad::binary_cross_entropy(v, targets); }, probs) < 1e-6);

  const Matrix pred = random_matrix(rng, 3, 4, -3.0, 3.0);
  const Matrix tgt = random_matrix(rng, 3, 4);
  CHECK(grad_error([&](ad::Tape&, ad::Var v) { return ad::smooth_l1(v, tgt); }, pred) < 1e-6);
}

TEST_CASE("masked softmax zeroes absent rows and columns") {
  ad::Tape tape;
  Matrix mask = Matrix::Ones(3, 3);
  mask.row(1).setZero();
  mask.col(1).setZero();
  const Matrix a = ad::masked_row_softmax(tape.constant(Matrix::Constant(3, 3, 1e3)), mask).value();
  CHECK(a.row(1).isZero(0.0));
  CHECK(a.col(1).isZero(0.0));
  CHECK(a(0, 0) == 0.5);
  CHECK(a.row(2).sum() == doctest::Approx(1.0));
}

TEST_CASE("cross entropy values") {
  ad::Tape tape;
  CHECK(ad::softmax_cross_entropy(tape.constant(Matrix::Zero(1, 2)), 0).value()(0, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  Matrix p(1, 2);
  p << 1.0, 0.0;
  Matrix t(1, 2);
  t << 1.0, 0.0;
  CHECK(ad::binary_cross_entropy(tape.constant(p), t).value()(0, 0) == 0.0);
  CHECK(ad::smooth_l1(tape.constant(Matrix::Constant(1, 2, 3.0)), Matrix::Zero(1, 2)).value()(0, 0) == 5.0);
}

TEST_CASE("sinks accumulate across uses of a leaf") {
  ad::Tape tape;
  Matrix x = Matrix::Constant(1, 1, 2.0);
  Matrix sink = Matrix::Zero(1, 1);
  ad::Var v = tape.variable(x, &sink);
  tape.backward(ad::sum(ad::mul(v, v)));
  CHECK(sink(0, 0) == 4.0);
  CHECK_THROWS(tape.backward(ad::hcat(v, v)));
}
