#pragma once

// Joint risk of an agent from its intervention score and, for pedestrians,
// how attentive they are towards the ego vehicle.

#include <map>
#include <vector>

#include "riskid/episode_io.hpp"
#include "riskid/intervene.hpp"

namespace riskid::fusion {

// Neutral attentiveness for agents without a face channel.
inline constexpr double kNeutralLook = 0.5;

// (s_roi + beta * (1 - s_look)) / (1 + beta); beta = 1 is the equal-weight mix.
// Throws InvalidInput for inputs outside [0,1] or a negative beta.
double joint_risk(double s_roi, double s_look, double beta = 1.0);

struct RankedAgent {
  int track_id = -1;
  double s_roi = 0.0;
  double s_look = kNeutralLook;
  double s_risk = 0.0;
};

// Descending s_risk, ties by lowest id. `looks` must cover exactly the scored tracks.
std::vector<RankedAgent> rank_agents(const InterventionResult& intervention, const std::map<int, double>& looks,
                                     double beta = 1.0);

Json ranking_to_json(const std::vector<RankedAgent>& ranking);

}  // namespace riskid::fusion
