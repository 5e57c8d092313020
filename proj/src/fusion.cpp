#include "riskid/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "riskid/errors.hpp"

namespace riskid::fusion {

double joint_risk(double s_roi, double s_look, double beta) {
  if (!(s_roi >= 0.0 && s_roi <= 1.0)) throw InvalidInput("joint_risk: s_roi outside [0,1]");
  if (!(s_look >= 0.0 && s_look <= 1.0)) throw InvalidInput("joint_risk: s_look outside [0,1]");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidInput("joint_risk: beta must be >= 0");
  return (s_roi + beta * (1.0 - s_look)) / (1.0 + beta);
}

std::vector<RankedAgent> rank_agents(const InterventionResult& intervention, const std::map<int, double>& looks,
                                     double beta) {
  if (looks.size() != intervention.continue_confidence.size()) {
    throw InvalidInput("rank_agents: attention scores and intervention scores cover different tracks");
  }
  std::vector<RankedAgent> out;
  for (const auto& [id, s_roi] : intervention.continue_confidence) {
    auto it = looks.find(id);
    if (it == looks.end()) throw InvalidInput("rank_agents: no attention score for track " + std::to_string(id));
    out.push_back({id, s_roi, it->second, joint_risk(s_roi, it->second, beta)});
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedAgent& a, const RankedAgent& b) {
    if (a.s_risk != b.s_risk) return a.s_risk > b.s_risk;
    return a.track_id < b.track_id;
  });
  return out;
}

Json ranking_to_json(const std::vector<RankedAgent>& ranking) {
  Json arr = Json::array();
  for (const auto& r : ranking) {
    Json j;
    j["id"] = r.track_id;
    j["s_roi"] = r.s_roi;
    j["s_look"] = r.s_look;
    j["s_risk"] = r.s_risk;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace riskid::fusion
