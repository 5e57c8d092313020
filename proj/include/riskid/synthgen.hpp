#pragma once

// Synthetic driving scenes with a known causal agent.
//
// World frame at the decision frame F_Z: ego at the origin heading +y, x to
// the right. The ego's planned path is a polyline (straight ahead, or a turn
// at 15 m) widened into a corridor. An agent is path-intersecting when its
// constant-velocity motion over the horizon comes within half the corridor
// width of that polyline. Alter episodes contain exactly one such agent.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskid/core_types.hpp"
#include "riskid/kv_config.hpp"

namespace riskid::synth {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

enum class Intent { kCrossPath, kParallel, kStationary, kBlockLane };
std::string_view to_string(Intent i);

struct KinematicAgent {
  int track_id = -1;
  AgentClass cls = AgentClass::kCar;
  Intent intent = Intent::kStationary;
  Vec2 position;  // at F_Z, metres
  Vec2 velocity;  // m/s, constant
  // Persons only: gaze angle away from the ego camera (radians) and its label.
  double gaze = 0.0;
  AttentionState attention = AttentionState::kNotSure;
  // Frames (1-based) in which the tracker lost the agent.
  std::vector<int> dropped_frames;
};

struct WorldConfig {
  std::uint64_t seed = 0;
  std::array<int, 2> n_agents_range{3, 9};  // non-ego agents per episode
  int z = 3;
  int d = 128;
  int slots = 0;  // frame width N including ego; 0 means n_agents_range[1] + 1
  double noise_sigma = 0.05;
  double alter_fraction = 0.5;
  std::map<RiskSituation, double> situation_mix;  // empty means uniform
  std::uint64_t embed_seed = 7;

  double dt = 0.5;
  double horizon = 4.0;
  double corridor_width = 3.5;
  double distractor_margin = 0.5;
  double decoy_probability = 0.5;
  double dropout_probability = 0.1;
  double face_noise = 0.05;

  void validate() const;
  int frame_slots() const { return slots > 0 ? slots : n_agents_range[1] + 1; }
  // Keys under "world.", e.g. world.seed, world.agents_min, world.mix.cut_in.
  static WorldConfig from_kv(const KeyValueConfig& kv);
  void write(KeyValueConfig& kv) const;
};

std::string situation_slug(RiskSituation s);

// The ego path for an action, as polyline vertices.
std::vector<Vec2> ego_path(DriverAction action);

// Distance from the segment [a, b] to the polyline.
double segment_polyline_distance(Vec2 a, Vec2 b, const std::vector<Vec2>& polyline);

// True when the agent's motion over `horizon` seconds enters the corridor.
bool intersects_corridor(const KinematicAgent& agent, DriverAction action, double horizon, double corridor_width);

struct Scene {
  DriverAction action = DriverAction::kGoStraight;
  RiskSituation situation = RiskSituation::kCrossingPedestrian;
  DriverResponse response = DriverResponse::kContinue;
  double ego_speed = 7.0;
  std::vector<KinematicAgent> agents;
  std::optional<int> causal_track_id;
};

// Track ids whose motion intersects the corridor under `cfg`.
std::vector<int> intersecting_tracks(const Scene& scene, const WorldConfig& cfg);

std::vector<Scene> generate_scenes(const WorldConfig& cfg, int count);
Scene generate_scene(const WorldConfig& cfg, int index);

// Fixed random-feature map applied to the raw agent descriptor.
class FeatureEmbedding {
 public:
  static constexpr int kRawDim = 16;
  FeatureEmbedding(int d, std::uint64_t embed_seed);
  Vector operator()(const std::array<double, kRawDim>& raw) const;
  int d() const { return d_; }

 private:
  int d_;
  Matrix omega_;  // kRawDim x (d - kRawDim)
  Vector phase_;
};

// Scene -> Episode with projected boxes, noisy features and padding slots.
Episode render(const Scene& scene, const WorldConfig& cfg, int index, const FeatureEmbedding& embedding);

std::vector<Episode> generate(const WorldConfig& cfg, int count);

// Image-plane box of an agent at a relative position (camera on the ego).
BoundingBox project_box(AgentClass cls, Vec2 relative);
inline constexpr BoundingBox kEgoBox{0.0, 0.0, 1920.0, 1200.0};

// Episode JSONL reader; every line must parse and validate.
std::vector<Episode> ingest_raid(const std::string& path);
std::vector<Episode> ingest_raid(std::istream& in);

struct Split {
  std::vector<Episode> train;
  std::vector<Episode> test;
  std::vector<std::string> warnings;
};

// Stratified by situation; per-stratum train size is round(ratio * size).
Split split(const std::vector<Episode>& episodes, double ratio, std::uint64_t seed);

}  // namespace riskid::synth
