#include "riskid/actionnet.hpp"

#include <cmath>
#include <string>

#include "riskid/errors.hpp"

namespace riskid::action {
namespace {

struct LstmVars {
  ad::Var h;
  ad::Var c;
};

LstmVars lstm_step(ParamBinder& bind, const std::string& prefix, ad::Var input, ad::Var h, ad::Var c) {
  const Eigen::Index hidden = h.cols();
  ad::Var z = ad::add_row(
      ad::add(ad::matmul(input, bind(prefix + ".wx")), ad::matmul(h, bind(prefix + ".wh"))),
      bind(prefix + ".b"));
  ad::Var in_gate = ad::sigmoid(ad::slice_cols(z, 0, hidden));
  ad::Var forget_gate = ad::sigmoid(ad::slice_cols(z, hidden, hidden));
  ad::Var candidate = ad::tanh(ad::slice_cols(z, 2 * hidden, hidden));
  ad::Var out_gate = ad::sigmoid(ad::slice_cols(z, 3 * hidden, hidden));
  ad::Var c_next = ad::add(ad::mul(forget_gate, c), ad::mul(in_gate, candidate));
  ad::Var h_next = ad::mul(out_gate, ad::tanh(c_next));
  return {h_next, c_next};
}

ad::Var affine(ParamBinder& bind, const std::string& prefix, ad::Var x) {
  return ad::add_row(ad::matmul(x, bind(prefix + ".weight")), bind(prefix + ".bias"));
}

Matrix as_row(const Vector& v) { return v.transpose(); }
Vector as_vector(const Matrix& row) { return row.row(0).transpose(); }

void add_affine(ParameterSet& params, const std::string& prefix, int in, int out, std::mt19937_64& rng) {
  params.add(prefix + ".weight", init_uniform(in, out, rng));
  params.add(prefix + ".bias", Matrix::Zero(1, out));
}

void add_lstm(ParameterSet& params, const std::string& prefix, int in, int hidden, std::mt19937_64& rng) {
  params.add(prefix + ".wx", init_uniform(in, 4 * hidden, rng));
  params.add(prefix + ".wh", init_uniform(hidden, 4 * hidden, rng));
  params.add(prefix + ".b", Matrix::Zero(1, 4 * hidden));
}

struct RolloutVars {
  std::vector<ad::Var> scores;
  ad::Var x_hat;
};

// Decoder from (h, c) with zero feedback input; x_hat is the mean of the
// rectified future projections over the p_d steps.
RolloutVars rollout(ParamBinder& bind, ad::Var h, ad::Var c, int p_d) {
  ad::Tape& tape = bind.tape();
  const Eigen::Index feedback = bind.params().at("action.dec_feedback.weight").cols();
  ad::Var f = tape.constant(Matrix::Zero(1, feedback));
  RolloutVars out;
  std::vector<ad::Var> futures;
  for (int k = 0; k < p_d; ++k) {
    LstmVars dec = lstm_step(bind, "action.dec", f, h, c);
    h = dec.h;
    c = dec.c;
    ad::Var s = affine(bind, "action.dec_score", h);
    out.scores.push_back(s);
    f = affine(bind, "action.dec_feedback", s);
    futures.push_back(ad::relu(affine(bind, "action.future", h)));
  }
  out.x_hat = ad::mean(futures);
  return out;
}

struct Forward {
  ActionVars vars;
  std::vector<ad::Var> cells;
  std::vector<ad::Var> x_hats;
};

Forward run_forward(ParamBinder& bind, const std::vector<ad::Var>& x, int p_d) {
  if (x.empty()) throw InvalidInput("action predictor: empty frame sequence");
  if (p_d < 1) throw ConfigError("action predictor: p_d must be >= 1");
  ad::Tape& tape = bind.tape();
  const Matrix& enc_wx = bind.params().at("action.enc.wx");
  const Matrix& enc_wh = bind.params().at("action.enc.wh");
  const Eigen::Index d = x.front().cols();
  const Eigen::Index hidden = enc_wh.rows();
  if (enc_wx.rows() != 2 * d) {
    throw ShapeError("encoder input expects " + std::to_string(enc_wx.rows()) + " values, got [x, x_hat] of " +
                     std::to_string(2 * d));
  }

  Forward out;
  ad::Var x_hat = tape.constant(Matrix::Zero(1, d));
  ad::Var h = tape.constant(Matrix::Zero(1, hidden));
  ad::Var c = tape.constant(Matrix::Zero(1, hidden));
  for (ad::Var x_t : x) {
    LstmVars enc = lstm_step(bind, "action.enc", ad::hcat(x_t, x_hat), h, c);
    h = enc.h;
    c = enc.c;
    out.vars.encoder_logits.push_back(affine(bind, "action.enc_head", h));
    out.vars.hidden.push_back(h);
    out.cells.push_back(c);

    RolloutVars roll = rollout(bind, h, c, p_d);
    x_hat = roll.x_hat;
    out.x_hats.push_back(x_hat);
    out.vars.decoder_logits.push_back(std::move(roll.scores));
  }
  return out;
}

}  // namespace

void init_params(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng) {
  add_lstm(params, "action.enc", 2 * cfg.d, cfg.hidden, rng);
  add_affine(params, "action.enc_head", cfg.hidden, kNumActions, rng);
  add_lstm(params, "action.dec", cfg.feedback_dim, cfg.hidden, rng);
  add_affine(params, "action.dec_score", cfg.hidden, kNumActions, rng);
  add_affine(params, "action.dec_feedback", kNumActions, cfg.feedback_dim, rng);
  add_affine(params, "action.future", cfg.hidden, cfg.d, rng);
}

Vector frame_feature(const Frame& frame) {
  if (frame.nodes.empty()) throw InvalidInput("frame_feature: frame has no ego slot");
  return frame.nodes.front().feature;
}

EncodeResult encode_step(const Vector& x, const Vector& x_hat, const Vector& h, const Vector& c,
                         const ParameterSet& params) {
  if (x.size() != x_hat.size()) throw ShapeError("encode_step: x and x_hat lengths differ");
  const Matrix& wx = params.at("action.enc.wx");
  const Matrix& wh = params.at("action.enc.wh");
  if (wx.rows() != x.size() + x_hat.size()) throw ShapeError("encode_step: input width mismatch");
  if (h.size() != wh.rows() || c.size() != wh.rows()) throw ShapeError("encode_step: state width mismatch");
  ad::Tape tape;
  ParamBinder bind(tape, params, nullptr);
  ad::Var input = tape.constant(Matrix(as_row(x)));
  input = ad::hcat(input, tape.constant(Matrix(as_row(x_hat))));
  LstmVars next = lstm_step(bind, "action.enc", input, tape.constant(Matrix(as_row(h))),
                            tape.constant(Matrix(as_row(c))));
  ad::Var s = affine(bind, "action.enc_head", next.h);
  return {as_vector(next.h.value()), as_vector(next.c.value()), as_vector(s.value())};
}

Rollout decoder_rollout(const Vector& h_e, const Vector& c_e, const ParameterSet& params, int p_d) {
  if (p_d < 1) throw ConfigError("decoder_rollout: p_d must be >= 1");
  ad::Tape tape;
  ParamBinder bind(tape, params, nullptr);
  RolloutVars roll = rollout(bind, tape.constant(Matrix(as_row(h_e))), tape.constant(Matrix(as_row(c_e))), p_d);
  Rollout out;
  for (ad::Var s : roll.scores) out.scores.push_back(as_vector(s.value()));
  out.x_hat = as_vector(roll.x_hat.value());
  return out;
}

std::vector<Vector> ActionPrediction::p_act() const {
  std::vector<Vector> out;
  for (const auto& f : frames) out.push_back(f.p_act);
  return out;
}

std::vector<std::vector<Vector>> ActionPrediction::p_future() const {
  std::vector<std::vector<Vector>> out;
  for (const auto& f : frames) out.push_back(f.p_future);
  return out;
}

ActionPrediction predict_action(const Episode& episode, const ParameterSet& params, const ModelConfig& cfg) {
  if (episode.z() < 1) throw InvalidInput("predict_action: episode has no frames");
  if (episode.z() != cfg.p_e) {
    throw ConfigError("predict_action: episode length Z=" + std::to_string(episode.z()) +
                      " does not match encoder horizon p_e=" + std::to_string(cfg.p_e));
  }
  ad::Tape tape;
  ParamBinder bind(tape, params, nullptr);
  std::vector<ad::Var> x;
  for (const Frame& f : episode.frames) x.push_back(tape.constant(Matrix(as_row(frame_feature(f)))));
  Forward fwd = run_forward(bind, x, cfg.p_d);

  ActionPrediction out;
  for (std::size_t t = 0; t < x.size(); ++t) {
    ActionPredictorState st;
    st.h_e = as_vector(fwd.vars.hidden[t].value());
    st.c_e = as_vector(fwd.cells[t].value());
    st.x_hat = as_vector(fwd.x_hats[t].value());
    st.s_e = as_vector(fwd.vars.encoder_logits[t].value());
    st.p_act = as_vector(ad::softmax_rows(fwd.vars.encoder_logits[t].value()));
    for (ad::Var s : fwd.vars.decoder_logits[t]) {
      st.s_d.push_back(as_vector(s.value()));
      st.p_future.push_back(as_vector(ad::softmax_rows(s.value())));
    }
    out.frames.push_back(std::move(st));
  }
  return out;
}

double action_loss(const std::vector<Vector>& p_int, const std::vector<std::vector<Vector>>& p_future,
                   const std::vector<DriverAction>& labels) {
  if (p_int.empty()) throw InvalidInput("action_loss: empty sequence");
  if (p_int.size() != labels.size() || p_future.size() != labels.size()) {
    throw InvalidInput("action_loss: predictions and labels differ in length");
  }
  const std::size_t z = labels.size();
  double gamma = 0.0;
  for (std::size_t t = 0; t < z; ++t) {
    gamma -= std::log(p_int[t][static_cast<int>(labels[t])]);
    for (std::size_t k = 1; k <= p_future[t].size(); ++k) {
      if (t + k >= z) break;
      gamma -= std::log(p_future[t][k - 1][static_cast<int>(labels[t + k])]);
    }
  }
  return gamma;
}

ActionVars action_forward(ParamBinder& bind, const std::vector<ad::Var>& x, int p_d) {
  return run_forward(bind, x, p_d).vars;
}

ad::Var action_loss_var(const ActionVars& vars, const std::vector<DriverAction>& labels) {
  const std::size_t z = labels.size();
  if (z == 0) throw InvalidInput("action_loss: empty sequence");
  if (vars.encoder_logits.size() != z) throw InvalidInput("action_loss: predictions and labels differ in length");
  ad::Var total = ad::softmax_cross_entropy(vars.encoder_logits[0], static_cast<int>(labels[0]));
  for (std::size_t t = 0; t < z; ++t) {
    if (t > 0) total = ad::add(total, ad::softmax_cross_entropy(vars.encoder_logits[t], static_cast<int>(labels[t])));
    const auto& dec = vars.decoder_logits[t];
    for (std::size_t k = 1; k <= dec.size() && t + k < z; ++k) {
      total = ad::add(total, ad::softmax_cross_entropy(dec[k - 1], static_cast<int>(labels[t + k])));
    }
  }
  return total;
}

}  // namespace riskid::action
