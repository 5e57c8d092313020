#pragma once

// Driver-action anticipation with a recurrent encoder-decoder.
//
// At every frame the encoder consumes [x_t, x_hat] and emits the current
// action logits s_e. The decoder then starts from the encoder state, runs
// p_d steps feeding its own projected scores back as input, and averages the
// rectified projections of its hidden states into the future feature x_hat
// consumed by the next encoder step.
//
// Parameters (ActionPredictorParams), row-vector convention y = x W + b:
//   action.enc.{wx,wh,b}              encoder LSTM, input 2D, hidden H
//   action.enc_head.{weight,bias}     H -> 3 action logits
//   action.dec.{wx,wh,b}              decoder LSTM, input F, hidden H
//   action.dec_score.{weight,bias}    H -> 3 future-action logits
//   action.dec_feedback.{weight,bias} 3 -> F feedback input
//   action.future.{weight,bias}       H -> D future feature (W_d, b_d)

#include <random>
#include <vector>

#include "riskid/autodiff.hpp"
#include "riskid/core_types.hpp"
#include "riskid/model_config.hpp"
#include "riskid/params.hpp"

namespace riskid::action {

void init_params(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng);

// Global frame descriptor x_t: the ego node's feature.
Vector frame_feature(const Frame& frame);

struct EncodeResult {
  Vector h;
  Vector c;
  Vector scores;  // s_e, logits over {left, right, straight}
};

EncodeResult encode_step(const Vector& x, const Vector& x_hat, const Vector& h, const Vector& c,
                         const ParameterSet& params);

struct Rollout {
  Vector x_hat;
  std::vector<Vector> scores;  // s_d logits for steps 1..p_d
};

// Decoder starts from (h_e, c_e) with zero feedback input.
Rollout decoder_rollout(const Vector& h_e, const Vector& c_e, const ParameterSet& params, int p_d);

// Per-frame state of the predictor after the encoder step for that frame.
struct ActionPredictorState {
  Vector h_e, c_e;
  Vector x_hat;
  Vector s_e;
  std::vector<Vector> s_d;
  Vector p_act;                     // softmax(s_e)
  std::vector<Vector> p_future;     // softmax of each s_d
};

struct ActionPrediction {
  std::vector<ActionPredictorState> frames;

  std::vector<Vector> p_act() const;
  std::vector<std::vector<Vector>> p_future() const;
  const Vector& final_hidden() const { return frames.back().h_e; }
};

// Requires episode.z() == p_e.
ActionPrediction predict_action(const Episode& episode, const ParameterSet& params, const ModelConfig& cfg);

// Loss on probability vectors: sum_t CE(p_int^t, l^t) + sum_k CE(p_future^t_k, l^{t+k}),
// decoder targets beyond the clip are dropped.
double action_loss(const std::vector<Vector>& p_int, const std::vector<std::vector<Vector>>& p_future,
                   const std::vector<DriverAction>& labels);

// Tape-level forward.
struct ActionVars {
  std::vector<ad::Var> encoder_logits;               // per frame
  std::vector<std::vector<ad::Var>> decoder_logits;  // per frame, p_d each
  std::vector<ad::Var> hidden;                       // h_e per frame
};

ActionVars action_forward(ParamBinder& bind, const std::vector<ad::Var>& x, int p_d);
ad::Var action_loss_var(const ActionVars& vars, const std::vector<DriverAction>& labels);

}  // namespace riskid::action
