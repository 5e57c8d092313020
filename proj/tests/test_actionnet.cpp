#include <doctest.h>

#include <cmath>

#include "riskid/actionnet.hpp"
#include "riskid/errors.hpp"
#include "support.hpp"

using namespace riskid;

namespace {

ParameterSet action_params(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterSet p;
  action::init_params(p, cfg, rng);
  return p;
}

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) { return 1.0 / (1.0 + (-x).exp()); }

// Textbook LSTM cell, gates ordered input, forget, candidate, output.
void lstm_oracle(const Vector& input, const Matrix& wx, const Matrix& wh, const Matrix& b, Vector& h, Vector& c) {
  const int hd = static_cast<int>(h.size());
  const Vector z = wx.transpose() * input + wh.transpose() * h + b.transpose();
  const Eigen::ArrayXd i = sigmoid(z.segment(0, hd).array());
  const Eigen::ArrayXd f = sigmoid(z.segment(hd, hd).array());
  const Eigen::ArrayXd g = z.segment(2 * hd, hd).array().tanh();
  const Eigen::ArrayXd o = sigmoid(z.segment(3 * hd, hd).array());
  c = (f * c.array() + i * g).matrix();
  h = (o * c.array().tanh()).matrix();
}

}  // namespace

TEST_CASE("encoder step matches a reference LSTM cell") {
  const ModelConfig cfg = testing::small_model(5);
  const ParameterSet p = action_params(cfg, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  Vector x(5), xh(5), h(4), c(4);
  for (auto* v : {&x, &xh, &h, &c}) {
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)[i] = n(rng);
  }
  const action::EncodeResult r = action::encode_step(x, xh, h, c, p);
  Vector input(10);
  input << x, xh;
  Vector eh = h, ec = c;
  lstm_oracle(input, p.at("action.enc.wx"), p.at("action.enc.wh"), p.at("action.enc.b"), eh, ec);
  CHECK((r.h - eh).norm() < 1e-14);
  CHECK((r.c - ec).norm() < 1e-14);
  const Vector s = p.at("action.enc_head.weight").transpose() * eh + p.at("action.enc_head.bias").transpose();
  CHECK((r.scores - s).norm() < 1e-14);
  CHECK_THROWS_AS(action::encode_step(x, Vector::Zero(4), h, c, p), ShapeError);
}

TEST_CASE("decoder rollout feeds back its scores and averages rectified futures") {
  const ModelConfig cfg = testing::small_model(5);
  const ParameterSet p = action_params(cfg, 3);
  Vector h = Vector::LinSpaced(4, -0.5, 0.5);
  Vector c = Vector::LinSpaced(4, 0.3, -0.3);
  const action::Rollout r = action::decoder_rollout(h, c, p, 3);
  REQUIRE(r.scores.size() == 3);

  Vector f = Vector::Zero(cfg.feedback_dim);
  Vector future_sum = Vector::Zero(5);
  for (int k = 0; k < 3; ++k) {
    lstm_oracle(f, p.at("action.dec.wx"), p.at("action.dec.wh"), p.at("action.dec.b"), h, c);
    const Vector s = p.at("action.dec_score.weight").transpose() * h + p.at("action.dec_score.bias").transpose();
    CHECK((r.scores[static_cast<std::size_t>(k)] - s).norm() < 1e-14);
    f = p.at("action.dec_feedback.weight").transpose() * s + p.at("action.dec_feedback.bias").transpose();
    future_sum += (p.at("action.future.weight").transpose() * h + p.at("action.future.bias").transpose())
                      .cwiseMax(0.0);
  }
  CHECK((r.x_hat - future_sum / 3.0).norm() < 1e-14);
}

TEST_CASE("episode prediction chains encoder steps through x_hat") {
  const ModelConfig cfg = testing::small_model(6);
  const ParameterSet p = action_params(cfg, 4);
  std::mt19937_64 rng(5);
  const Episode e = testing::random_episode(rng, {3, 4, 6, 0.3});
  const action::ActionPrediction pred = action::predict_action(e, p, cfg);
  REQUIRE(pred.frames.size() == 3);
  Vector h = Vector::Zero(4), c = Vector::Zero(4), xh = Vector::Zero(6);
  for (int t = 0; t < 3; ++t) {
    const auto step = action::encode_step(action::frame_feature(e.frames[t]), xh, h, c, p);
    h = step.h;
    c = step.c;
    const auto& st = pred.frames[static_cast<std::size_t>(t)];
    CHECK((st.h_e - h).norm() < 1e-13);
    CHECK(st.p_act.sum() == doctest::Approx(1.0));
    CHECK(st.p_future.size() == static_cast<std::size_t>(cfg.p_d));
    xh = action::decoder_rollout(h, c, p, cfg.p_d).x_hat;
    CHECK((st.x_hat - xh).norm() < 1e-13);
  }
  CHECK((pred.final_hidden() - h).norm() < 1e-13);
}

TEST_CASE("episode length must equal the encoder horizon") {
  ModelConfig cfg = testing::small_model(6);
  const ParameterSet p = action_params(cfg, 4);
  std::mt19937_64 rng(6);
  const Episode e = testing::random_episode(rng, {4, 3, 6, 0.0});
  CHECK_THROWS_AS(action::predict_action(e, p, cfg), ConfigError);
}

TEST_CASE("action loss counts every in-clip target once") {
  const std::vector<DriverAction> labels{DriverAction::kLeftTurn, DriverAction::kGoStraight, DriverAction::kRightTurn};
  const Vector uniform = Vector::Constant(3, 1.0 / 3.0);
  const std::vector<Vector> p_int(3, uniform);
  const std::vector<std::vector<Vector>> p_future(3, std::vector<Vector>(3, uniform));
  // 3 encoder terms plus decoder targets t+k < Z: (0,1) (0,2) (1,1).
  CHECK(action::action_loss(p_int, p_future, labels) == doctest::Approx(6.0 * std::log(3.0)).epsilon(1e-14));

  std::vector<Vector> one_hot_int;
  std::vector<std::vector<Vector>> one_hot_future;
  for (std::size_t t = 0; t < 3; ++t) {
    one_hot_int.push_back(Vector::Unit(3, static_cast<int>(labels[t])));
    std::vector<Vector> fut;
    for (std::size_t k = 1; k <= 3; ++k) {
      fut.push_back(t + k < 3 ? Vector::Unit(3, static_cast<int>(labels[t + k])) : uniform);
    }
    one_hot_future.push_back(fut);
  }
  CHECK(action::action_loss(one_hot_int, one_hot_future, labels) == 0.0);
  CHECK_THROWS_AS(action::action_loss({}, {}, {}), InvalidInput);
}

TEST_CASE("tape loss equals the probability-space loss") {
  const ModelConfig cfg = testing::small_model(6);
  const ParameterSet p = action_params(cfg, 8);
  std::mt19937_64 rng(9);
  const Episode e = testing::random_episode(rng, {3, 4, 6, 0.3});
  const auto pred = action::predict_action(e, p, cfg);
  ad::Tape tape;
  ParamBinder bind(tape, p, nullptr);
  std::vector<ad::Var> x;
  for (const auto& f : e.frames) x.push_back(tape.constant(Matrix(action::frame_feature(f).transpose())));
  const double tape_loss = action::action_loss_var(action::action_forward(bind, x, cfg.p_d), e.actions).value()(0, 0);
  CHECK(tape_loss == doctest::Approx(action::action_loss(pred.p_act(), pred.p_future(), e.actions)).epsilon(1e-12));
}
