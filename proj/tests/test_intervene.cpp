#include <doctest.h>

#include <cmath>

#include "riskid/errors.hpp"
#include "riskid/intervene.hpp"
#include "support.hpp"

using namespace riskid;

TEST_CASE("mask_agent removes one track everywhere") {
  std::mt19937_64 rng(1);
  const Episode e = testing::random_episode(rng, {3, 5, 4, 0.0});
  const Episode m = mask_agent(e, 3);
  for (std::size_t t = 0; t < e.frames.size(); ++t) {
    for (std::size_t s = 0; s < 5; ++s) {
      const AgentNode& node = m.frames[t].nodes[s];
      if (node.track_id == 3) {
        CHECK_FALSE(node.present);
        CHECK(node.feature.isZero(0.0));
      } else {
        CHECK(node.present == e.frames[t].nodes[s].present);
        CHECK(node.feature == e.frames[t].nodes[s].feature);
      }
    }
  }
  CHECK(candidate_tracks(m) == std::vector<int>{1, 2, 4});
  CHECK_THROWS_AS(mask_agent(e, 0), InvalidInput);
  CHECK_THROWS_AS(mask_agent(e, 77), InvalidInput);
}

TEST_CASE("masked features cannot reach the response") {
  std::mt19937_64 rng(2);
  for (bool action : {true, false}) {
    const ModelConfig cfg = testing::small_model(6, action);
    const ParameterSet p = init_model_params(cfg, 3);
    for (int trial = 0; trial < 10; ++trial) {
      Episode e = testing::random_episode(rng, {3, 6, 6, 0.2});
      const Episode masked = mask_agent(e, 2);
      Episode perturbed = masked;
      for (auto& f : perturbed.frames) f.nodes[2].feature.setConstant(1e6);
      CHECK((predict_response(masked, p, cfg).logits - predict_response(perturbed, p, cfg).logits).norm() == 0.0);
    }
  }
}

TEST_CASE("response probabilities are a distribution") {
  std::mt19937_64 rng(3);
  const ModelConfig cfg = testing::small_model(6);
  const ParameterSet p = init_model_params(cfg, 4);
  const auto r = predict_response(testing::random_episode(rng, {3, 4, 6, 0.0}), p, cfg);
  CHECK(r.p_continue + r.p_alter == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.p_continue == doctest::Approx(1.0 / (1.0 + std::exp(r.logits[1] - r.logits[0]))));
}

TEST_CASE("identify_risk_object picks the most reassuring removal") {
  std::mt19937_64 rng(5);
  const ModelConfig cfg = testing::small_model(6);
  const ParameterSet p = init_model_params(cfg, 6);
  for (int trial = 0; trial < 10; ++trial) {
    const Episode e = testing::random_episode(rng, {3, 6, 6, 0.3});
    const InterventionResult r = identify_risk_object(e, p, cfg);
    const std::vector<int> ids = candidate_tracks(e);
    REQUIRE(r.continue_confidence.size() == ids.size());
    int best = ids.front();
    for (int id : ids) {
      const double c = predict_response(mask_agent(e, id), p, cfg).p_continue;
      CHECK(r.continue_confidence.at(id) == c);
      if (c > r.continue_confidence.at(best)) best = id;
    }
    CHECK(r.chosen_track_id == best);
    CHECK(r.chosen_box == e.last_frame().nodes[find_slot(e.last_frame(), best)].box);
    CHECK(r.baseline[0] == predict_response(e, p, cfg).p_continue);
  }
}

TEST_CASE("identical twins tie towards the lower id") {
  std::mt19937_64 rng(7);
  const ModelConfig cfg = testing::small_model(4, false);
  const ParameterSet p = init_model_params(cfg, 8);
  Episode e = testing::random_episode(rng, {3, 3, 4, 0.0});
  for (auto& f : e.frames) {
    f.nodes[2].feature = f.nodes[1].feature;
    f.nodes[2].cls = f.nodes[1].cls;
  }
  const InterventionResult r = identify_risk_object(e, p, cfg);
  CHECK(r.continue_confidence.at(1) == r.continue_confidence.at(2));
  CHECK(r.chosen_track_id == 1);
}

TEST_CASE("no final-frame agents is a degenerate scene") {
  std::mt19937_64 rng(9);
  const ModelConfig cfg = testing::small_model(4);
  const ParameterSet p = init_model_params(cfg, 1);
  Episode e = testing::random_episode(rng, {3, 3, 4, 0.0});
  for (int s = 1; s < 3; ++s) {
    e.frames.back().nodes[s].present = false;
    e.frames.back().nodes[s].feature.setZero();
  }
  CHECK_THROWS_WITH_AS(identify_risk_object(e, p, cfg), doctest::Contains("no candidate agents"), DegenerateScene);
}

TEST_CASE("response loss") {
  const std::vector<std::array<double, 2>> uniform(4, {0.5, 0.5});
  const std::vector<DriverResponse> labels{DriverResponse::kContinue, DriverResponse::kAlter,
                                           DriverResponse::kAlter, DriverResponse::kContinue};
  CHECK(std::abs(response_loss(uniform, labels) - std::log(2.0)) < 1e-9);
  CHECK(response_loss({{1.0, 0.0}}, {DriverResponse::kContinue}) == 0.0);
  CHECK(response_loss({{0.2, 0.8}}, {DriverResponse::kContinue}) == doctest::Approx(-std::log(0.2)));
  CHECK_THROWS_AS(response_loss(uniform, {DriverResponse::kAlter}), InvalidInput);
}

TEST_CASE("objective gradients match finite differences") {
  std::mt19937_64 rng(10);
  for (bool action : {true, false}) {
    const ModelConfig cfg = testing::small_model(5, action);
    ParameterSet p = init_model_params(cfg, 11);
    testing::jitter(p, rng, 0.1);
    const Episode e = testing::random_episode(rng, {3, 4, 5, 0.2});
    ParameterSet grads = p.zeros_like();
    const LossBreakdown loss = episode_objective(e, p, cfg, 1.0, 0.7, &grads);
    CHECK(loss.total == doctest::Approx(loss.response + 0.7 * loss.action));
    const auto check = testing::check_gradient(
        [&](const ParameterSet& q) { return episode_objective(e, q, cfg, 1.0, 0.7, nullptr).total; }, p, grads, rng,
        150);
    CHECK(check.relative_error < 1e-6);
    for (const auto& [name, g] : grads) {
      if (name.rfind("attention.", 0) == 0) CHECK(g.isZero(0.0));
    }
  }
}

TEST_CASE("intervention JSON schema") {
  InterventionResult r;
  r.continue_confidence = {{3, 0.25}, {5, 0.75}};
  r.chosen_track_id = 5;
  r.chosen_box = {1, 2, 3, 4};
  const Json j = intervention_to_json(r, 12);
  CHECK(j.at("episode") == 12);
  CHECK(j.at("chosen") == 5);
  CHECK(j.at("scores").size() == 2);
  CHECK(j.at("box").size() == 4);
  CHECK(j.at("baseline").size() == 2);
}
