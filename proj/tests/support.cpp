#include "support.hpp"

#include <algorithm>
#include <cmath>

namespace riskid::testing {

BoundingBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, 1500.0);
  std::uniform_real_distribution<double> size(5.0, 300.0);
  BoundingBox b;
  b.x_min = pos(rng);
  b.y_min = pos(rng) * 0.6;
  b.x_max = b.x_min + size(rng);
  b.y_max = b.y_min + size(rng);
  return b;
}

Episode random_episode(std::mt19937_64& rng, const EpisodeShape& shape) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> cls_pick(0, 7);
  std::uniform_int_distribution<int> action_pick(0, 2);
  std::uniform_int_distribution<int> situation_pick(0, kNumSituations - 1);

  std::vector<AgentClass> classes(shape.n, AgentClass::kEgo);
  for (int s = 1; s < shape.n; ++s) classes[s] = static_cast<AgentClass>(cls_pick(rng));
  if (shape.faces && shape.n > 1) classes[1] = AgentClass::kPerson;

  Episode e;
  for (int t = 1; t <= shape.z; ++t) {
    Frame f;
    f.index = t;
    for (int s = 0; s < shape.n; ++s) {
      AgentNode node;
      node.track_id = s;
      node.cls = classes[s];
      node.present = s == 0 || unit(rng) >= shape.absent_probability;
      if (s == 1 && t == shape.z) node.present = true;
      node.box = s == 0 ? BoundingBox{0.0, 0.0, 1920.0, 1200.0} : random_box(rng);
      node.feature = Vector::Zero(shape.d);
      if (node.present) {
        for (int k = 0; k < shape.d; ++k) node.feature[k] = normal(rng);
      }
      if (shape.faces && node.cls == AgentClass::kPerson) {
        node.face = Vector(2);
        (*node.face) << normal(rng), normal(rng);
        node.attention = unit(rng) < 0.5 ? AttentionState::kLooking : AttentionState::kNotLooking;
      }
      f.nodes.push_back(std::move(node));
    }
    e.frames.push_back(std::move(f));
  }
  for (int t = 0; t < shape.z; ++t) e.actions.push_back(static_cast<DriverAction>(action_pick(rng)));
  e.response = unit(rng) < 0.5 ? DriverResponse::kContinue : DriverResponse::kAlter;
  e.situation = static_cast<RiskSituation>(situation_pick(rng));
  const std::vector<int> candidates = candidate_tracks(e);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  const int causal = candidates[pick(rng)];
  e.causal_track_id = causal;
  e.gt_box = e.last_frame().nodes[find_slot(e.last_frame(), causal)].box;
  return e;
}

ModelConfig small_model(int d, bool action_branch) {
  ModelConfig cfg;
  cfg.d = d;
  cfg.hidden = 4;
  cfg.response_hidden = 5;
  cfg.use_action_branch = action_branch;
  return cfg;
}

void jitter(ParameterSet& params, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& [name, m] : params) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += noise(rng);
  }
}

double relative_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(a.norm() + b.norm(), 1e-12);
}

GradCheck check_gradient(const std::function<double(const ParameterSet&)>& f, const ParameterSet& params,
                         const ParameterSet& analytic, std::mt19937_64& rng, int max_coords, double step) {
  struct Coord {
    std::string name;
    Eigen::Index index;
  };
  std::vector<Coord> all;
  for (const auto& [name, m] : params) {
    for (Eigen::Index i = 0; i < m.size(); ++i) all.push_back({name, i});
  }
  std::shuffle(all.begin(), all.end(), rng);
  if (static_cast<int>(all.size()) > max_coords) all.resize(static_cast<std::size_t>(max_coords));

  ParameterSet probe = params;
  Vector numeric(static_cast<Eigen::Index>(all.size()));
  Vector exact(static_cast<Eigen::Index>(all.size()));
  for (std::size_t c = 0; c < all.size(); ++c) {
    double& x = probe.at(all[c].name).data()[all[c].index];
    const double saved = x;
    x = saved + step;
    const double up = f(probe);
    x = saved - step;
    const double down = f(probe);
    x = saved;
    numeric[static_cast<Eigen::Index>(c)] = (up - down) / (2.0 * step);
    exact[static_cast<Eigen::Index>(c)] = analytic.at(all[c].name).data()[all[c].index];
  }
  return {relative_error(exact, numeric), static_cast<int>(all.size())};
}

}  // namespace riskid::testing
