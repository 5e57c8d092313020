#include "riskid/intervene.hpp"

#include <cmath>
#include <string>

#include "riskid/actionnet.hpp"
#include "riskid/errors.hpp"
#include "riskid/graphnet.hpp"

namespace riskid {
namespace {

constexpr int kNumResponses = 2;

struct GraphInputs {
  std::vector<ad::Var> features;
  std::vector<Eigen::VectorXd> presence;
};

GraphInputs graph_inputs(ad::Tape& tape, const Episode& episode) {
  GraphInputs in;
  for (const Frame& f : episode.frames) {
    in.features.push_back(tape.constant(graph::frame_features(f)));
    in.presence.push_back(graph::frame_presence(f));
  }
  return in;
}

std::vector<ad::Var> ego_inputs(ad::Tape& tape, const Episode& episode) {
  std::vector<ad::Var> x;
  for (const Frame& f : episode.frames) x.push_back(tape.constant(Matrix(action::frame_feature(f).transpose())));
  return x;
}

void check_horizon(const Episode& episode, const ModelConfig& cfg) {
  if (cfg.use_action_branch && episode.z() != cfg.p_e) {
    throw ConfigError("episode length Z=" + std::to_string(episode.z()) + " does not match p_e=" +
                      std::to_string(cfg.p_e));
  }
}

ResponsePrediction to_prediction(const Matrix& logits) {
  const Matrix p = ad::softmax_rows(logits);
  ResponsePrediction out;
  out.p_continue = p(0, 0);
  out.p_alter = p(0, 1);
  out.logits = logits.row(0).transpose();
  return out;
}

// Response with a precomputed encoder state (the action branch only reads the
// ego slot, which interventions never touch).
ResponsePrediction response_given_state(const Episode& episode, const ParameterSet& params,
                                        const std::optional<Matrix>& h_e) {
  ad::Tape tape;
  ParamBinder bind(tape, params, nullptr);
  GraphInputs in = graph_inputs(tape, episode);
  ad::Var g = graph::relational_feature(bind, in.features, in.presence);
  std::optional<ad::Var> h;
  if (h_e) h = tape.constant(*h_e);
  return to_prediction(response_logits_var(bind, g, h).value());
}

std::optional<Matrix> encoder_state(const Episode& episode, const ParameterSet& params, const ModelConfig& cfg) {
  if (!cfg.use_action_branch) return std::nullopt;
  const action::ActionPrediction pred = action::predict_action(episode, params, cfg);
  return Matrix(pred.final_hidden().transpose());
}

}  // namespace

void init_response_params(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng) {
  const int in = cfg.d + (cfg.use_action_branch ? cfg.hidden : 0);
  int out_in = in;
  if (cfg.response_hidden > 0) {
    params.add("response.hidden.weight", init_uniform(in, cfg.response_hidden, rng));
    params.add("response.hidden.bias", Matrix::Zero(1, cfg.response_hidden));
    out_in = cfg.response_hidden;
  }
  params.add("response.out.weight", init_uniform(out_in, kNumResponses, rng));
  params.add("response.out.bias", Matrix::Zero(1, kNumResponses));
}

ad::Var response_logits_var(ParamBinder& bind, ad::Var g, std::optional<ad::Var> h_e) {
  ad::Var x = h_e ? ad::hcat(g, *h_e) : g;
  const Matrix* w = bind.params().contains("response.hidden.weight") ? &bind.params().at("response.hidden.weight")
                                                                     : &bind.params().at("response.out.weight");
  if (w->rows() != x.cols()) {
    throw ShapeError("response head expects " + std::to_string(w->rows()) + " inputs, got " +
                     std::to_string(x.cols()));
  }
  if (bind.params().contains("response.hidden.weight")) {
    x = ad::relu(ad::add_row(ad::matmul(x, bind("response.hidden.weight")), bind("response.hidden.bias")));
  }
  return ad::add_row(ad::matmul(x, bind("response.out.weight")), bind("response.out.bias"));
}

ResponsePrediction predict_response(const Episode& episode, const ParameterSet& params, const ModelConfig& cfg) {
  if (episode.z() < 1) throw InvalidInput("predict_response: episode has no frames");
  check_horizon(episode, cfg);
  return response_given_state(episode, params, encoder_state(episode, params, cfg));
}

Episode mask_agent(const Episode& episode, int track_id) {
  bool found = false;
  for (const Frame& f : episode.frames) {
    const int slot = find_slot(f, track_id);
    if (slot < 0) continue;
    if (f.nodes[slot].cls == AgentClass::kEgo) throw InvalidInput("mask_agent: the ego vehicle cannot be masked");
    found = true;
  }
  if (!found || track_id < 0) throw InvalidInput("mask_agent: unknown track id " + std::to_string(track_id));

  Episode out = episode;
  for (Frame& f : out.frames) {
    const int slot = find_slot(f, track_id);
    if (slot < 0) continue;
    AgentNode& node = f.nodes[slot];
    node.present = false;
    node.feature.setZero();
  }
  return out;
}

InterventionResult identify_risk_object(const Episode& episode, const ParameterSet& params, const ModelConfig& cfg) {
  const std::vector<int> candidates = candidate_tracks(episode);
  if (candidates.empty()) throw DegenerateScene("no candidate agents in the final frame");
  check_horizon(episode, cfg);
  const std::optional<Matrix> h_e = encoder_state(episode, params, cfg);

  InterventionResult result;
  const ResponsePrediction base = response_given_state(episode, params, h_e);
  result.baseline = {base.p_continue, base.p_alter};
  double best = -1.0;
  for (int id : candidates) {
    const double p = response_given_state(mask_agent(episode, id), params, h_e).p_continue;
    result.continue_confidence[id] = p;
    // Ascending ids with a strict comparison keep the lowest id on ties.
    if (p > best) {
      best = p;
      result.chosen_track_id = id;
    }
  }
  const Frame& last = episode.last_frame();
  result.chosen_box = last.nodes[find_slot(last, result.chosen_track_id)].box;
  return result;
}

double response_loss(const std::vector<std::array<double, 2>>& predictions,
                     const std::vector<DriverResponse>& labels) {
  if (predictions.empty()) throw InvalidInput("response_loss: empty batch");
  if (predictions.size() != labels.size()) throw InvalidInput("response_loss: predictions and labels differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    total -= std::log(predictions[i][static_cast<int>(labels[i])]);
  }
  return total / static_cast<double>(predictions.size());
}

Json intervention_to_json(const InterventionResult& result, int episode_id) {
  Json scores = Json::object();
  for (const auto& [id, p] : result.continue_confidence) scores[std::to_string(id)] = p;
  Json j;
  j["episode"] = episode_id;
  j["baseline"] = {result.baseline[0], result.baseline[1]};
  j["scores"] = std::move(scores);
  j["chosen"] = result.chosen_track_id;
  j["box"] = box_to_json(result.chosen_box);
  return j;
}

LossBreakdown episode_objective(const Episode& episode, const ParameterSet& params, const ModelConfig& cfg,
                                double response_weight, double action_weight, ParameterSet* grads) {
  if (episode.z() < 1) throw InvalidInput("episode_objective: episode has no frames");
  check_horizon(episode, cfg);
  ad::Tape tape;
  ParamBinder bind(tape, params, grads);
  GraphInputs in = graph_inputs(tape, episode);
  ad::Var g = graph::relational_feature(bind, in.features, in.presence);

  std::optional<ad::Var> h_e;
  std::optional<ad::Var> gamma;
  if (cfg.use_action_branch) {
    action::ActionVars av = action::action_forward(bind, ego_inputs(tape, episode), cfg.p_d);
    h_e = av.hidden.back();
    gamma = action::action_loss_var(av, episode.actions);
  }
  ad::Var logits = response_logits_var(bind, g, h_e);
  ad::Var resp = ad::softmax_cross_entropy(logits, static_cast<int>(episode.response));

  ad::Var total = ad::scale(resp, response_weight);
  if (gamma) total = ad::add(total, ad::scale(*gamma, action_weight));

  LossBreakdown out;
  out.response = resp.value()(0, 0);
  out.action = gamma ? gamma->value()(0, 0) : 0.0;
  out.total = total.value()(0, 0);
  if (grads) tape.backward(total);
  return out;
}

}  // namespace riskid
