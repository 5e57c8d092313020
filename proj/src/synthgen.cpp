#include "riskid/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "riskid/episode_io.hpp"
#include "riskid/errors.hpp"

namespace riskid::synth {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kImageWidth = 1920.0;
constexpr double kImageHeight = 1200.0;
constexpr double kFocal = 1000.0;
constexpr double kCameraHeight = 1.5;
constexpr double kMinDepth = 3.0;
constexpr int kMaxTries = 2000;

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return norm(p - a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

bool segments_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

double segment_distance(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  if (segments_cross(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d), point_segment_distance(c, a, b),
                   point_segment_distance(d, a, b)});
}

// Point, unit tangent and left normal at arc length s; extrapolates past the end.
struct PathFrame {
  Vec2 p, t, n;
};

PathFrame path_frame(const std::vector<Vec2>& path, double s) {
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec2 seg = path[i + 1] - path[i];
    const double len = norm(seg);
    const Vec2 t = (1.0 / len) * seg;
    if (s <= len || i + 2 == path.size()) return {path[i] + s * t, t, {-t.y, t.x}};
    s -= len;
  }
  throw std::logic_error("path_frame: degenerate path");
}

struct ClassShape {
  double width, height, elevation;
};

ClassShape class_shape(AgentClass c) {
  switch (c) {
    case AgentClass::kPerson: return {0.6, 1.75, 0.0};
    case AgentClass::kBicycle: return {0.7, 1.7, 0.0};
    case AgentClass::kCar: return {1.8, 1.5, 0.0};
    case AgentClass::kMotorcycle: return {0.8, 1.5, 0.0};
    case AgentClass::kBus: return {2.6, 3.2, 0.0};
    case AgentClass::kTruck: return {2.5, 3.0, 0.0};
    case AgentClass::kTrafficLight: return {0.4, 1.0, 4.5};
    case AgentClass::kStopSign: return {0.75, 0.75, 2.0};
    case AgentClass::kEgo: break;
  }
  throw InvalidInput("project_box: the ego has no projected box");
}

class Sampler {
 public:
  explicit Sampler(std::mt19937_64& rng) : rng_(rng) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double side() { return uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0; }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  template <typename T>
  T pick(std::initializer_list<T> items) {
    return *(items.begin() + integer(0, static_cast<int>(items.size()) - 1));
  }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64& rng_;
};

KinematicAgent place(AgentClass cls, Intent intent, const PathFrame& f, double lateral, double along_speed,
                     double toward_speed, double side) {
  KinematicAgent a;
  a.cls = cls;
  a.intent = intent;
  a.position = f.p + lateral * f.n;
  // Positive toward_speed moves the agent toward the path centre line.
  a.velocity = along_speed * f.t + (-side * toward_speed) * f.n;
  return a;
}

// Candidate draw for the situation-defining agent.
KinematicAgent draw_situation_agent(RiskSituation sit, const std::vector<Vec2>& path, bool causal, Sampler& s) {
  const double side = s.side();
  switch (sit) {
    case RiskSituation::kCrossingPedestrian: {
      const PathFrame f = path_frame(path, s.uniform(6.0, 28.0));
      if (causal) return place(AgentClass::kPerson, Intent::kCrossPath, f, side * s.uniform(2.5, 6.0), 0.0, s.uniform(1.2, 2.2), side);
      if (s.chance(0.5)) return place(AgentClass::kPerson, Intent::kParallel, f, side * s.uniform(3.5, 7.0), s.side() * s.uniform(0.8, 1.8), 0.0, side);
      return place(AgentClass::kPerson, Intent::kStationary, f, side * s.uniform(3.0, 6.0), 0.0, 0.0, side);
    }
    case RiskSituation::kJaywalking: {
      const PathFrame f = path_frame(path, s.uniform(12.0, 35.0));
      if (causal) return place(AgentClass::kPerson, Intent::kCrossPath, f, side * s.uniform(2.2, 4.5), 0.0, s.uniform(0.8, 1.6), side);
      return place(AgentClass::kPerson, Intent::kCrossPath, f, side * s.uniform(3.5, 6.0), 0.0, -s.uniform(0.8, 1.6), side);
    }
    case RiskSituation::kCrossingVehicle: {
      const AgentClass cls = s.pick({AgentClass::kCar, AgentClass::kCar, AgentClass::kTruck, AgentClass::kBus,
                                     AgentClass::kMotorcycle, AgentClass::kBicycle});
      const PathFrame f = path_frame(path, s.uniform(10.0, 32.0));
      if (causal) return place(cls, Intent::kCrossPath, f, side * s.uniform(6.0, 18.0), 0.0, s.uniform(4.0, 9.0), side);
      if (s.chance(0.5)) return place(cls, Intent::kStationary, f, side * s.uniform(7.0, 15.0), 0.0, 0.0, side);
      return place(cls, Intent::kCrossPath, f, side * s.uniform(7.0, 15.0), 0.0, -s.uniform(4.0, 9.0), side);
    }
    case RiskSituation::kCarBlockingEgoLane: {
      const AgentClass cls = s.pick({AgentClass::kCar, AgentClass::kCar, AgentClass::kTruck, AgentClass::kBus});
      const PathFrame f = path_frame(path, s.uniform(10.0, 32.0));
      if (causal) return place(cls, Intent::kBlockLane, f, s.uniform(-1.0, 1.0), 0.0, 0.0, side);
      return place(cls, Intent::kStationary, f, side * s.uniform(4.5, 7.0), 0.0, 0.0, side);
    }
    case RiskSituation::kCongestion: {
      const AgentClass cls = s.pick({AgentClass::kCar, AgentClass::kCar, AgentClass::kTruck, AgentClass::kBus});
      const PathFrame f = path_frame(path, s.uniform(8.0, 22.0));
      if (causal) return place(cls, Intent::kBlockLane, f, s.uniform(-0.8, 0.8), s.uniform(0.0, 2.0), 0.0, side);
      return place(cls, Intent::kParallel, f, side * s.uniform(4.5, 7.0), s.uniform(0.0, 2.0), 0.0, side);
    }
    case RiskSituation::kCutIn: {
      const AgentClass cls = s.pick({AgentClass::kCar, AgentClass::kCar, AgentClass::kMotorcycle});
      const PathFrame f = path_frame(path, s.uniform(5.0, 18.0));
      if (causal) return place(cls, Intent::kCrossPath, f, side * s.uniform(3.0, 4.5), s.uniform(4.0, 8.0), s.uniform(0.8, 1.6), side);
      return place(cls, Intent::kParallel, f, side * s.uniform(4.5, 6.5), s.uniform(4.0, 8.0), 0.0, side);
    }
    case RiskSituation::kTrafficLight:
    case RiskSituation::kStopSign: {
      const AgentClass cls = sit == RiskSituation::kTrafficLight ? AgentClass::kTrafficLight : AgentClass::kStopSign;
      const PathFrame f = path_frame(path, s.uniform(12.0, 30.0));
      if (causal) return place(cls, Intent::kBlockLane, f, s.uniform(-1.0, 1.0), 0.0, 0.0, side);
      return place(cls, Intent::kStationary, f, side * s.uniform(4.5, 8.0), 0.0, 0.0, side);
    }
  }
  throw std::logic_error("unknown situation");
}

KinematicAgent draw_distractor(const std::vector<Vec2>& path, Sampler& s) {
  const double u = s.uniform(0.0, 1.0);
  AgentClass cls = AgentClass::kCar;
  if (u < 0.25) cls = AgentClass::kPerson;
  else if (u < 0.60) cls = AgentClass::kCar;
  else if (u < 0.70) cls = AgentClass::kTruck;
  else if (u < 0.75) cls = AgentClass::kBus;
  else if (u < 0.85) cls = AgentClass::kBicycle;
  else if (u < 0.95) cls = AgentClass::kMotorcycle;
  else if (u < 0.98) cls = AgentClass::kTrafficLight;
  else cls = AgentClass::kStopSign;
  const bool fixed_object = cls == AgentClass::kTrafficLight || cls == AgentClass::kStopSign;
  const bool slow = cls == AgentClass::kPerson;
  const double side = s.side();
  const PathFrame f = path_frame(path, s.uniform(0.0, 45.0));
  const double lateral = side * s.uniform(3.5, 15.0);
  if (fixed_object) return place(cls, Intent::kStationary, f, lateral, 0.0, 0.0, side);
  switch (s.integer(0, 2)) {
    case 0: return place(cls, Intent::kParallel, f, lateral, s.side() * (slow ? s.uniform(0.5, 1.8) : s.uniform(0.0, 8.0)), 0.0, side);
    case 1: return place(cls, Intent::kStationary, f, lateral, 0.0, 0.0, side);
    default: return place(cls, Intent::kCrossPath, f, lateral, 0.0, slow ? s.uniform(-1.5, 1.5) : s.uniform(-6.0, 6.0), side);
  }
}

// Stationary vehicle on the straight continuation, outside the turn corridor.
KinematicAgent draw_decoy(Sampler& s) {
  KinematicAgent a;
  a.cls = s.pick({AgentClass::kCar, AgentClass::kTruck});
  a.intent = Intent::kStationary;
  a.position = {s.uniform(-1.0, 1.0), s.uniform(22.0, 35.0)};
  return a;
}

bool visible(const KinematicAgent& a, double ego_speed, const WorldConfig& cfg) {
  for (int k = 0; k < cfg.z; ++k) {
    const double tau = -cfg.dt * k;
    const double rel_y = a.position.y + a.velocity.y * tau - ego_speed * tau;
    if (rel_y < kMinDepth) return false;
  }
  return true;
}

double clearance(const KinematicAgent& a, DriverAction action, double horizon) {
  return segment_polyline_distance(a.position, a.position + horizon * a.velocity, ego_path(action));
}

void assign_gaze(KinematicAgent& a, Sampler& s) {
  if (a.cls != AgentClass::kPerson) return;
  const double u = s.uniform(0.0, 1.0);
  if (u < 0.35) {
    a.attention = AttentionState::kLooking;
    a.gaze = s.uniform(-0.5, 0.5);
  } else if (u < 0.90) {
    a.attention = AttentionState::kNotLooking;
    a.gaze = s.side() * s.uniform(1.2, kPi);
  } else {
    a.attention = AttentionState::kNotSure;
    a.gaze = s.side() * s.uniform(0.6, 1.1);
  }
}

RiskSituation draw_situation(const WorldConfig& cfg, Sampler& s) {
  double u = s.uniform(0.0, 1.0);
  RiskSituation last = kAllSituations.front();
  for (RiskSituation sit : kAllSituations) {
    const auto it = cfg.situation_mix.find(sit);
    const double p = cfg.situation_mix.empty() ? 1.0 / kNumSituations : (it == cfg.situation_mix.end() ? 0.0 : it->second);
    if (p <= 0.0) continue;
    last = sit;
    if (u < p) return sit;
    u -= p;
  }
  return last;
}

std::mt19937_64 episode_rng(std::uint64_t seed, int index, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), stream};
  return std::mt19937_64(seq);
}

double yaw_signal(DriverAction a) {
  switch (a) {
    case DriverAction::kLeftTurn: return 1.0;
    case DriverAction::kRightTurn: return -1.0;
    case DriverAction::kGoStraight: return 0.0;
  }
  return 0.0;
}

template <typename F>
void parallel_for(int count, F&& body) {
  const int workers = std::max(1, std::min<int>(count, static_cast<int>(std::thread::hardware_concurrency())));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::string_view to_string(Intent i) {
  switch (i) {
    case Intent::kCrossPath: return "cross_path";
    case Intent::kParallel: return "parallel";
    case Intent::kStationary: return "stationary";
    case Intent::kBlockLane: return "block_lane";
  }
  return "?";
}

std::string situation_slug(RiskSituation s) {
  std::string out;
  for (char c : to_string(s)) {
    if (c == ' ' || c == '-') {
      out += '_';
    } else {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  return out;
}

void WorldConfig::validate() const {
  if (n_agents_range[0] < 1) throw ConfigError("world: agents_min must be >= 1");
  if (n_agents_range[1] < n_agents_range[0]) throw ConfigError("world: agents_max must be >= agents_min");
  if (z < 1) throw ConfigError("world: z must be >= 1");
  if (d < FeatureEmbedding::kRawDim) {
    throw ConfigError("world: d must be >= " + std::to_string(FeatureEmbedding::kRawDim));
  }
  if (slots != 0 && slots < n_agents_range[1] + 1) throw ConfigError("world: slots must fit ego plus agents_max");
  if (!(noise_sigma >= 0.0)) throw ConfigError("world: noise_sigma must be >= 0");
  if (!(alter_fraction >= 0.0 && alter_fraction <= 1.0)) throw ConfigError("world: alter_fraction must lie in [0,1]");
  if (!(dt > 0.0) || !(horizon > 0.0) || !(corridor_width > 0.0)) {
    throw ConfigError("world: dt, horizon and corridor_width must be positive");
  }
  if (!situation_mix.empty()) {
    double total = 0.0;
    for (const auto& [sit, p] : situation_mix) {
      if (!(p >= 0.0)) throw ConfigError("world: negative probability for " + situation_slug(sit));
      total += p;
    }
    if (total == 0.0) throw ConfigError("world: situation_mix gives every situation zero probability");
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("world: situation_mix must sum to 1");
  }
}

WorldConfig WorldConfig::from_kv(const KeyValueConfig& kv) {
  WorldConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("world.seed", static_cast<long long>(c.seed)));
  c.n_agents_range[0] = static_cast<int>(kv.get_int("world.agents_min", c.n_agents_range[0]));
  c.n_agents_range[1] = static_cast<int>(kv.get_int("world.agents_max", c.n_agents_range[1]));
  c.z = static_cast<int>(kv.get_int("world.z", c.z));
  c.d = static_cast<int>(kv.get_int("world.d", c.d));
  c.slots = static_cast<int>(kv.get_int("world.slots", c.slots));
  c.noise_sigma = kv.get_double("world.noise_sigma", c.noise_sigma);
  c.alter_fraction = kv.get_double("world.alter_fraction", c.alter_fraction);
  c.embed_seed = static_cast<std::uint64_t>(kv.get_int("world.embed_seed", static_cast<long long>(c.embed_seed)));
  c.dt = kv.get_double("world.dt", c.dt);
  c.horizon = kv.get_double("world.horizon", c.horizon);
  c.corridor_width = kv.get_double("world.corridor_width", c.corridor_width);
  c.distractor_margin = kv.get_double("world.distractor_margin", c.distractor_margin);
  c.decoy_probability = kv.get_double("world.decoy_probability", c.decoy_probability);
  c.dropout_probability = kv.get_double("world.dropout_probability", c.dropout_probability);
  c.face_noise = kv.get_double("world.face_noise", c.face_noise);
  const auto mix = kv.with_prefix("world.mix.");
  for (const auto& [slug, value] : mix) {
    bool known = false;
    for (RiskSituation s : kAllSituations) {
      if (situation_slug(s) == slug) {
        c.situation_mix[s] = kv.get_double("world.mix." + slug, 0.0);
        known = true;
      }
    }
    if (!known) throw ConfigError("world: unknown situation '" + slug + "' in world.mix");
  }
  c.validate();
  return c;
}

void WorldConfig::write(KeyValueConfig& kv) const {
  kv.set("world.seed", std::to_string(seed));
  kv.set("world.agents_min", std::to_string(n_agents_range[0]));
  kv.set("world.agents_max", std::to_string(n_agents_range[1]));
  kv.set("world.z", std::to_string(z));
  kv.set("world.d", std::to_string(d));
  kv.set("world.slots", std::to_string(slots));
  kv.set("world.embed_seed", std::to_string(embed_seed));
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  kv.set("world.noise_sigma", num(noise_sigma));
  kv.set("world.alter_fraction", num(alter_fraction));
  kv.set("world.dt", num(dt));
  kv.set("world.horizon", num(horizon));
  kv.set("world.corridor_width", num(corridor_width));
  kv.set("world.distractor_margin", num(distractor_margin));
  kv.set("world.decoy_probability", num(decoy_probability));
  kv.set("world.dropout_probability", num(dropout_probability));
  kv.set("world.face_noise", num(face_noise));
  for (const auto& [s, p] : situation_mix) kv.set("world.mix." + situation_slug(s), num(p));
}

std::vector<Vec2> ego_path(DriverAction action) {
  switch (action) {
    case DriverAction::kGoStraight: return {{0.0, 0.0}, {0.0, 40.0}};
    case DriverAction::kLeftTurn: return {{0.0, 0.0}, {0.0, 15.0}, {-25.0, 15.0}};
    case DriverAction::kRightTurn: return {{0.0, 0.0}, {0.0, 15.0}, {25.0, 15.0}};
  }
  throw std::logic_error("unknown action");
}

double segment_polyline_distance(Vec2 a, Vec2 b, const std::vector<Vec2>& polyline) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    best = std::min(best, segment_distance(a, b, polyline[i], polyline[i + 1]));
  }
  return best;
}

bool intersects_corridor(const KinematicAgent& agent, DriverAction action, double horizon, double corridor_width) {
  return clearance(agent, action, horizon) <= corridor_width / 2.0;
}

std::vector<int> intersecting_tracks(const Scene& scene, const WorldConfig& cfg) {
  std::vector<int> out;
  for (const auto& a : scene.agents) {
    if (intersects_corridor(a, scene.action, cfg.horizon, cfg.corridor_width)) out.push_back(a.track_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Scene generate_scene(const WorldConfig& cfg, int index) {
  std::mt19937_64 rng = episode_rng(cfg.seed, index, 0);
  Sampler s(rng);
  Scene scene;
  scene.situation = draw_situation(cfg, s);
  scene.response = s.chance(cfg.alter_fraction) ? DriverResponse::kAlter : DriverResponse::kContinue;
  switch (scene.situation) {
    case RiskSituation::kCarBlockingEgoLane:
    case RiskSituation::kCongestion:
    case RiskSituation::kCutIn:
      scene.action = DriverAction::kGoStraight;
      break;
    default: {
      const double u = s.uniform(0.0, 1.0);
      scene.action = u < 0.5 ? DriverAction::kGoStraight : (u < 0.75 ? DriverAction::kLeftTurn : DriverAction::kRightTurn);
    }
  }
  scene.ego_speed = s.uniform(6.0, 8.0);
  const std::vector<Vec2> path = ego_path(scene.action);
  const double half = cfg.corridor_width / 2.0;
  const double clear = half + cfg.distractor_margin;
  const bool alter = scene.response == DriverResponse::kAlter;

  auto accept = [&](const KinematicAgent& a, bool causal) {
    if (!visible(a, scene.ego_speed, cfg)) return false;
    const double c = clearance(a, scene.action, cfg.horizon);
    return causal ? c <= half : c >= clear;
  };
  auto draw_until = [&](auto&& draw, bool causal, const char* what) {
    for (int tries = 0; tries < kMaxTries; ++tries) {
      KinematicAgent a = draw();
      if (accept(a, causal)) return a;
    }
    throw std::logic_error(std::string("generator could not place a ") + what);
  };

  const int n = s.integer(cfg.n_agents_range[0], cfg.n_agents_range[1]);
  std::vector<KinematicAgent> agents;
  agents.push_back(draw_until([&] { return draw_situation_agent(scene.situation, path, alter, s); }, alter,
                              "situation agent"));
  const bool turning = scene.action != DriverAction::kGoStraight;
  for (int i = 1; i < n; ++i) {
    if (i == 1 && turning && s.chance(cfg.decoy_probability)) {
      agents.push_back(draw_until([&] { return draw_decoy(s); }, false, "decoy"));
    } else {
      agents.push_back(draw_until([&] { return draw_distractor(path, s); }, false, "distractor"));
    }
  }
  for (auto& a : agents) assign_gaze(a, s);
  for (std::size_t i = 1; i < agents.size(); ++i) {
    for (int k = 1; k < cfg.z; ++k) {
      if (s.chance(cfg.dropout_probability)) agents[i].dropped_frames.push_back(k);
    }
  }

  std::vector<int> ids(agents.size());
  std::iota(ids.begin(), ids.end(), 1);
  std::shuffle(ids.begin(), ids.end(), rng);
  for (std::size_t i = 0; i < agents.size(); ++i) agents[i].track_id = ids[i];
  if (alter) scene.causal_track_id = agents.front().track_id;
  std::shuffle(agents.begin(), agents.end(), rng);
  scene.agents = std::move(agents);
  return scene;
}

std::vector<Scene> generate_scenes(const WorldConfig& cfg, int count) {
  cfg.validate();
  if (count < 0) throw InvalidInput("generate: count must be >= 0");
  std::vector<Scene> out(static_cast<std::size_t>(count));
  parallel_for(count, [&](int i) { out[static_cast<std::size_t>(i)] = generate_scene(cfg, i); });
  return out;
}

FeatureEmbedding::FeatureEmbedding(int d, std::uint64_t embed_seed) : d_(d) {
  if (d < kRawDim) throw ConfigError("feature embedding needs d >= " + std::to_string(kRawDim));
  std::mt19937_64 rng(embed_seed);
  std::normal_distribution<double> normal(0.0, 1.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  omega_.resize(kRawDim, d - kRawDim);
  phase_.resize(d - kRawDim);
  for (Eigen::Index j = 0; j < omega_.cols(); ++j) {
    for (Eigen::Index i = 0; i < kRawDim; ++i) omega_(i, j) = normal(rng);
    phase_[j] = phase(rng);
  }
}

Vector FeatureEmbedding::operator()(const std::array<double, kRawDim>& raw) const {
  const Eigen::Map<const Eigen::RowVectorXd> r(raw.data(), kRawDim);
  Vector out(d_);
  out.head(kRawDim) = r.transpose();
  if (d_ > kRawDim) out.tail(d_ - kRawDim) = ((r * omega_).transpose() + phase_).array().cos().matrix();
  return out;
}

BoundingBox project_box(AgentClass cls, Vec2 relative) {
  const ClassShape shape = class_shape(cls);
  const double depth = std::max(relative.y, 1.0);
  const double u = kImageWidth / 2.0 + kFocal * relative.x / depth;
  const double half_w = kFocal * shape.width / (2.0 * depth);
  const double v_bottom = kImageHeight / 2.0 + kFocal * (kCameraHeight - shape.elevation) / depth;
  const double v_top = kImageHeight / 2.0 + kFocal * (kCameraHeight - shape.elevation - shape.height) / depth;
  BoundingBox b;
  b.x_min = std::clamp(u - half_w, 0.0, kImageWidth - 2.0);
  b.x_max = std::clamp(u + half_w, b.x_min + 2.0, kImageWidth);
  b.y_min = std::clamp(v_top, 0.0, kImageHeight - 2.0);
  b.y_max = std::clamp(v_bottom, b.y_min + 2.0, kImageHeight);
  return b;
}

Episode render(const Scene& scene, const WorldConfig& cfg, int index, const FeatureEmbedding& embedding) {
  std::mt19937_64 rng = episode_rng(cfg.seed, index, 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> face_jitter(-cfg.face_noise, cfg.face_noise);
  const int slots = cfg.frame_slots();
  if (static_cast<int>(scene.agents.size()) + 1 > slots) throw InvalidInput("render: more agents than frame slots");
  const double yaw = yaw_signal(scene.action);

  auto noisy = [&](const std::array<double, FeatureEmbedding::kRawDim>& raw) {
    Vector f = embedding(raw);
    if (cfg.noise_sigma > 0.0) {
      for (Eigen::Index i = 0; i < f.size(); ++i) f[i] += cfg.noise_sigma * noise(rng);
    }
    return f;
  };

  Episode e;
  e.situation = scene.situation;
  e.response = scene.response;
  e.actions.assign(static_cast<std::size_t>(cfg.z), scene.action);
  e.causal_track_id = scene.causal_track_id;
  for (int k = 1; k <= cfg.z; ++k) {
    const double tau = -cfg.dt * (cfg.z - k);
    const Vec2 ego_pos{0.0, scene.ego_speed * tau};
    Frame frame;
    frame.index = k;

    AgentNode ego;
    ego.track_id = 0;
    ego.cls = AgentClass::kEgo;
    ego.box = kEgoBox;
    ego.present = true;
    std::array<double, FeatureEmbedding::kRawDim> raw{};
    raw[static_cast<int>(AgentClass::kEgo)] = 1.0;
    raw[12] = scene.ego_speed / 5.0;
    raw[13] = kEgoBox.width() / 500.0;
    raw[14] = kEgoBox.height() / 500.0;
    raw[15] = yaw;
    ego.feature = noisy(raw);
    frame.nodes.push_back(std::move(ego));

    for (const KinematicAgent& a : scene.agents) {
      AgentNode node;
      node.track_id = a.track_id;
      node.cls = a.cls;
      const Vec2 rel = (a.position + tau * a.velocity) - ego_pos;
      node.box = project_box(a.cls, rel);
      const bool dropped = std::find(a.dropped_frames.begin(), a.dropped_frames.end(), k) != a.dropped_frames.end();
      node.present = !dropped;
      if (node.present) {
        std::array<double, FeatureEmbedding::kRawDim> r{};
        r[static_cast<int>(a.cls)] = 1.0;
        r[9] = rel.x / 10.0;
        r[10] = rel.y / 20.0;
        r[11] = a.velocity.x / 5.0;
        r[12] = (a.velocity.y - scene.ego_speed) / 5.0;
        r[13] = node.box.width() / 500.0;
        r[14] = node.box.height() / 500.0;
        node.feature = noisy(r);
      } else {
        node.feature = Vector::Zero(cfg.d);
      }
      if (a.cls == AgentClass::kPerson) {
        Vector face(2);
        face << std::cos(a.gaze) + face_jitter(rng), std::sin(a.gaze) + face_jitter(rng);
        node.face = face;
        node.attention = a.attention;
      }
      frame.nodes.push_back(std::move(node));
    }
    while (static_cast<int>(frame.nodes.size()) < slots) {
      AgentNode pad;
      pad.box = {0.0, 0.0, 1.0, 1.0};
      pad.feature = Vector::Zero(cfg.d);
      frame.nodes.push_back(std::move(pad));
    }
    e.frames.push_back(std::move(frame));
  }
  if (scene.causal_track_id) {
    const Frame& last = e.last_frame();
    e.gt_box = last.nodes[find_slot(last, *scene.causal_track_id)].box;
  }
  return e;
}

std::vector<Episode> generate(const WorldConfig& cfg, int count) {
  const std::vector<Scene> scenes = generate_scenes(cfg, count);
  const FeatureEmbedding embedding(cfg.d, cfg.embed_seed);
  std::vector<Episode> out(scenes.size());
  parallel_for(count, [&](int i) { out[static_cast<std::size_t>(i)] = render(scenes[i], cfg, i, embedding); });
  return out;
}

std::vector<Episode> ingest_raid(std::istream& in) {
  std::vector<Episode> out;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::exception& e) {
      throw ParseError("line " + std::to_string(line) + ": " + e.what());
    }
    Episode e = episode_from_json(j, line);
    const auto violations = validate_episode(e);
    if (!violations.empty()) {
      const Violation& v = violations.front();
      throw ValidationError("line " + std::to_string(line) + ": " + v.field +
                            (v.frame > 0 ? " (frame " + std::to_string(v.frame) + ")" : "") + ": " + v.message);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Episode> ingest_raid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open episode file '" + path + "'");
  return ingest_raid(in);
}

Split split(const std::vector<Episode>& episodes, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidInput("split: ratio must lie in (0,1)");
  std::mt19937_64 rng(seed);
  std::vector<char> in_train(episodes.size(), 0);
  Split out;
  for (RiskSituation s : kAllSituations) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      if (episodes[i].situation == s) idx.push_back(i);
    }
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      out.warnings.push_back("situation '" + std::string(to_string(s)) + "' has fewer than 2 episodes; kept in train");
      for (std::size_t i : idx) in_train[i] = 1;
      continue;
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t k = 0; k < n_train; ++k) in_train[idx[k]] = 1;
  }
  for (std::size_t i = 0; i < episodes.size(); ++i) (in_train[i] ? out.train : out.test).push_back(episodes[i]);
  return out;
}

}  // namespace riskid::synth
