#pragma once

// Fixtures shared by the unit tests and the acceptance runner.

#include <functional>
#include <random>

#include "riskid/core_types.hpp"
#include "riskid/model_config.hpp"
#include "riskid/params.hpp"

namespace riskid::testing {

struct EpisodeShape {
  int z = 3;
  int n = 5;  // slots including the ego
  int d = 8;
  double absent_probability = 0.25;
  bool faces = false;
};

// Valid random episode: ego in slot 0, tracks 1..n-1, at least one candidate
// in the final frame, causal track and gt box drawn among the candidates.
Episode random_episode(std::mt19937_64& rng, const EpisodeShape& shape);

BoundingBox random_box(std::mt19937_64& rng);

ModelConfig small_model(int d, bool action_branch = true);

// Adds N(0, sigma^2) noise to every scalar, so zero-initialised biases do not
// park activations exactly on a ReLU kink.
void jitter(ParameterSet& params, std::mt19937_64& rng, double sigma);

// ||a - b|| / max(||a|| + ||b||, 1e-12)
double relative_error(const Vector& a, const Vector& b);

struct GradCheck {
  double relative_error = 0.0;
  int coordinates = 0;
};

// Central differences of `f` on up to `max_coords` randomly chosen scalars of
// `params`, compared with the matching entries of `analytic`.
GradCheck check_gradient(const std::function<double(const ParameterSet&)>& f, const ParameterSet& params,
                         const ParameterSet& analytic, std::mt19937_64& rng, int max_coords, double step = 1e-6);

}  // namespace riskid::testing
