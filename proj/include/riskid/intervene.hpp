#pragma once

// Driver-response prediction and the masking intervention that names the
// risk object: every candidate agent is removed in turn and the one whose
// removal makes "Continue" most likely is reported.

#include <array>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "riskid/autodiff.hpp"
#include "riskid/core_types.hpp"
#include "riskid/episode_io.hpp"
#include "riskid/model_config.hpp"
#include "riskid/params.hpp"

namespace riskid {

// ResponseHead: response.hidden.{weight,bias} (when response_hidden > 0) and
// response.out.{weight,bias}, mapping [g, h_e] (or g alone) to
// logits over {Continue, Alter}.
void init_response_params(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng);

struct ResponsePrediction {
  double p_continue = 0.5;
  double p_alter = 0.5;
  Vector logits;  // {Continue, Alter}
};

ResponsePrediction predict_response(const Episode& episode, const ParameterSet& params, const ModelConfig& cfg);

// Copy with `track_id` absent and zeroed in every frame. Throws InvalidInput
// for the ego track or an unknown id.
Episode mask_agent(const Episode& episode, int track_id);

struct InterventionResult {
  std::map<int, double> continue_confidence;
  int chosen_track_id = -1;
  BoundingBox chosen_box;
  std::array<double, 2> baseline{0.5, 0.5};  // unmasked (p_continue, p_alter)
};

// Throws DegenerateScene when no non-ego agent is present in the final frame.
InterventionResult identify_risk_object(const Episode& episode, const ParameterSet& params, const ModelConfig& cfg);

// Mean two-class cross entropy of (p_continue, p_alter) rows.
double response_loss(const std::vector<std::array<double, 2>>& predictions,
                     const std::vector<DriverResponse>& labels);

Json intervention_to_json(const InterventionResult& result, int episode_id);

// Tape-level response classifier on g and, when given, the encoder state.
ad::Var response_logits_var(ParamBinder& bind, ad::Var g, std::optional<ad::Var> h_e);

struct LossBreakdown {
  double response = 0.0;
  double action = 0.0;
  double total = 0.0;
};

// response_weight * CE(response) + action_weight * gamma for one episode.
// Adds parameter gradients into `grads` when it is non-null.
LossBreakdown episode_objective(const Episode& episode, const ParameterSet& params, const ModelConfig& cfg,
                                double response_weight, double action_weight, ParameterSet* grads);

}  // namespace riskid
