#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "riskid/episode_io.hpp"
#include "riskid/errors.hpp"
#include "riskid/synthgen.hpp"

using namespace riskid;
using namespace riskid::synth;

namespace {

double point_segment(double px, double py, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  double t = ((px - a.x) * dx + (py - a.y) * dy) / (dx * dx + dy * dy);
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - a.x - t * dx, py - a.y - t * dy);
}

// Closest approach of the agent's straight-line motion to the ego path,
// sampled densely in time against hand-written corridor vertices.
double replay_clearance(const KinematicAgent& a, DriverAction action, double horizon) {
  std::vector<Vec2> path{{0, 0}, {0, 40}};
  if (action == DriverAction::kLeftTurn) path = {{0, 0}, {0, 15}, {-25, 15}};
  if (action == DriverAction::kRightTurn) path = {{0, 0}, {0, 15}, {25, 15}};
  double best = 1e300;
  const int steps = 20000;
  for (int i = 0; i <= steps; ++i) {
    const double t = horizon * i / steps;
    const double px = a.position.x + t * a.velocity.x;
    const double py = a.position.y + t * a.velocity.y;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) best = std::min(best, point_segment(px, py, path[k], path[k + 1]));
  }
  return best;
}

WorldConfig small_world(std::uint64_t seed) {
  WorldConfig cfg;
  cfg.seed = seed;
  cfg.d = 24;
  return cfg;
}

}  // namespace

TEST_CASE("corridor geometry") {
  CHECK(ego_path(DriverAction::kLeftTurn).back().x == -25.0);
  KinematicAgent a;
  a.position = {-10, 20};
  a.velocity = {0, 0};
  CHECK(segment_polyline_distance(a.position, a.position, ego_path(DriverAction::kGoStraight)) == 10.0);
  CHECK(segment_polyline_distance(a.position, a.position, ego_path(DriverAction::kLeftTurn)) == 5.0);
  a.velocity = {5, 0};
  CHECK(intersects_corridor(a, DriverAction::kGoStraight, 4.0, 3.5));
  CHECK_FALSE(intersects_corridor(a, DriverAction::kGoStraight, 1.0, 3.5));
  a.position = {1.75, 5};
  a.velocity = {0, 0};
  CHECK(intersects_corridor(a, DriverAction::kGoStraight, 4.0, 3.5));
}

TEST_CASE("scene labels agree with replayed kinematics") {
  const WorldConfig cfg = small_world(21);
  const double half = cfg.corridor_width / 2.0;
  int alter = 0;
  for (int i = 0; i < 200; ++i) {
    const Scene s = generate_scene(cfg, i);
    std::vector<int> hits;
    for (const auto& a : s.agents) {
      const double c = replay_clearance(a, s.action, cfg.horizon);
      if (c <= half) hits.push_back(a.track_id);
      if (!s.causal_track_id || a.track_id != *s.causal_track_id) {
        CHECK(c >= half + cfg.distractor_margin - 1e-3);
      }
    }
    std::sort(hits.begin(), hits.end());
    CHECK(hits == intersecting_tracks(s, cfg));
    if (s.response == DriverResponse::kAlter) {
      ++alter;
      REQUIRE(s.causal_track_id.has_value());
      CHECK(hits == std::vector<int>{*s.causal_track_id});
    } else {
      CHECK(hits.empty());
      CHECK_FALSE(s.causal_track_id.has_value());
    }
  }
  CHECK(alter > 70);
  CHECK(alter < 130);
}

TEST_CASE("agents stay in front of the camera in every frame") {
  const WorldConfig cfg = small_world(22);
  for (int i = 0; i < 100; ++i) {
    const Scene s = generate_scene(cfg, i);
    for (const auto& a : s.agents) {
      for (int k = 1; k <= cfg.z; ++k) {
        const double tau = -cfg.dt * (cfg.z - k);
        CHECK(a.position.y + tau * a.velocity.y - s.ego_speed * tau >= 3.0 - 1e-9);
      }
    }
  }
}

TEST_CASE("forced situations and their ego actions") {
  WorldConfig cfg = small_world(23);
  cfg.situation_mix = {{RiskSituation::kCutIn, 1.0}};
  for (int i = 0; i < 30; ++i) {
    const Scene s = generate_scene(cfg, i);
    CHECK(s.situation == RiskSituation::kCutIn);
    CHECK(s.action == DriverAction::kGoStraight);
  }
}

TEST_CASE("rendered episodes are valid and shaped by the config") {
  const WorldConfig cfg = small_world(24);
  const std::vector<Episode> eps = generate(cfg, 60);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const Episode& e = eps[i];
    CHECK(validate_episode(e).empty());
    CHECK(e.z() == 3);
    CHECK(e.n() == 10);
    CHECK(e.d() == 24);
    CHECK(e.actions.size() == 3);
    std::set<int> ids;
    for (const auto& node : e.last_frame().nodes) {
      if (node.track_id < 0) {
        CHECK_FALSE(node.present);
        CHECK(node.feature.isZero(0.0));
      } else {
        ids.insert(node.track_id);
      }
      if (node.present) CHECK(node.box.valid());
      if (node.present && node.cls == AgentClass::kPerson) CHECK(node.face.has_value());
    }
    if (e.response == DriverResponse::kAlter) {
      const int slot = find_slot(e.last_frame(), *e.causal_track_id);
      REQUIRE(slot > 0);
      CHECK(e.last_frame().nodes[slot].present);
      CHECK(*e.gt_box == e.last_frame().nodes[slot].box);
    }
    for (const auto& f : e.frames) CHECK(f.nodes[0].track_id == 0);
  }
}

TEST_CASE("generation is a pure function of seed and index") {
  const WorldConfig cfg = small_world(25);
  const auto a = generate(cfg, 12);
  const auto b = generate(cfg, 12);
  const auto prefix = generate(cfg, 5);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(episode_to_line(a[i]) == episode_to_line(b[i]));
  for (std::size_t i = 0; i < prefix.size(); ++i) CHECK(episode_to_line(a[i]) == episode_to_line(prefix[i]));
  WorldConfig other = cfg;
  other.seed = 26;
  CHECK(episode_to_line(generate(other, 1)[0]) != episode_to_line(a[0]));
}

TEST_CASE("projection shrinks with distance and stays inside the image") {
  const BoundingBox near = project_box(AgentClass::kCar, {0.0, 5.0});
  const BoundingBox far = project_box(AgentClass::kCar, {0.0, 40.0});
  CHECK(near.valid());
  CHECK(far.valid());
  CHECK(far.height() < near.height());
  CHECK(near.x_min >= 0.0);
  CHECK(near.x_max <= 1920.0);
  const BoundingBox left = project_box(AgentClass::kPerson, {-4.0, 10.0});
  CHECK((left.x_min + left.x_max) / 2.0 < 960.0);
}

TEST_CASE("feature embedding is deterministic in its seed") {
  FeatureEmbedding a(32, 7), b(32, 7), c(32, 8);
  std::array<double, FeatureEmbedding::kRawDim> raw{};
  raw[2] = 1.0;
  raw[9] = 0.4;
  CHECK(a(raw) == b(raw));
  CHECK(a(raw) != c(raw));
  CHECK(a(raw).size() == 32);
  CHECK(a(raw).head(FeatureEmbedding::kRawDim)[9] == 0.4);
}

TEST_CASE("world config round trips through key-value text") {
  WorldConfig cfg = small_world(27);
  cfg.situation_mix = {{RiskSituation::kJaywalking, 0.75}, {RiskSituation::kStopSign, 0.25}};
  cfg.n_agents_range = {2, 5};
  KeyValueConfig kv;
  cfg.write(kv);
  const WorldConfig back = WorldConfig::from_kv(KeyValueConfig::parse(kv.dump()));
  CHECK(back.seed == 27);
  CHECK(back.n_agents_range == cfg.n_agents_range);
  CHECK(back.situation_mix == cfg.situation_mix);
  CHECK(back.frame_slots() == 6);
  WorldConfig bad = cfg;
  bad.n_agents_range = {5, 2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("ingest reports the failing line, field and frame") {
  const auto eps = generate(small_world(28), 2);
  Json broken = episode_to_json(eps[1]);
  broken["frames"][1]["nodes"][0]["present"] = false;
  std::istringstream in(episode_to_line(eps[0]) + "\n" + broken.dump() + "\n");
  try {
    ingest_raid(in);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("frame 2") != std::string::npos);
    CHECK(msg.find("nodes[0]") != std::string::npos);
  }
  std::istringstream junk("{not json\n");
  CHECK_THROWS_AS(ingest_raid(junk), ParseError);
  std::istringstream good(episode_to_line(eps[0]) + "\n\n" + episode_to_line(eps[1]) + "\n");
  CHECK(ingest_raid(good).size() == 2);
}

TEST_CASE("split is stratified by situation") {
  const auto eps = generate(small_world(29), 200);
  const Split s = split(eps, 0.8, 3);
  CHECK(s.train.size() + s.test.size() == 200);
  for (RiskSituation sit : kAllSituations) {
    const auto total = std::count_if(eps.begin(), eps.end(), [&](const Episode& e) { return e.situation == sit; });
    const auto train = std::count_if(s.train.begin(), s.train.end(), [&](const Episode& e) { return e.situation == sit; });
    if (total >= 2) CHECK(train == std::clamp<long>(std::lround(0.8 * static_cast<double>(total)), 1, total - 1));
  }
  const Split tiny = split({eps[0]}, 0.5, 1);
  CHECK(tiny.train.size() == 1);
  CHECK(tiny.warnings.size() == 1);
  CHECK_THROWS_AS(split(eps, 1.0, 1), InvalidInput);
}
