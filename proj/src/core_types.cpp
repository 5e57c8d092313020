#include "riskid/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "riskid/errors.hpp"

namespace riskid {
namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::pair<Enum, std::string_view>, N>& table,
                           std::string_view tag) {
  for (const auto& [value, name] : table) {
    if (name == tag) return value;
  }
  return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& table,
                         Enum value) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::array<std::pair<AgentClass, std::string_view>, 9> kClassNames = {{
    {AgentClass::kPerson, "person"},
    {AgentClass::kBicycle, "bicycle"},
    {AgentClass::kCar, "car"},
    {AgentClass::kMotorcycle, "motorcycle"},
    {AgentClass::kBus, "bus"},
    {AgentClass::kTruck, "truck"},
    {AgentClass::kTrafficLight, "traffic-light"},
    {AgentClass::kStopSign, "stop-sign"},
    {AgentClass::kEgo, "ego"},
}};

constexpr std::array<std::pair<DriverResponse, std::string_view>, 2> kResponseNames = {{
    {DriverResponse::kContinue, "Continue"},
    {DriverResponse::kAlter, "Alter"},
}};

constexpr std::array<std::pair<DriverAction, std::string_view>, 3> kActionNames = {{
    {DriverAction::kLeftTurn, "Left-Turn"},
    {DriverAction::kRightTurn, "Right-Turn"},
    {DriverAction::kGoStraight, "Go-Straight"},
}};

constexpr std::array<std::pair<RiskSituation, std::string_view>, 8> kSituationNames = {{
    {RiskSituation::kCrossingPedestrian, "Crossing Pedestrian"},
    {RiskSituation::kCrossingVehicle, "Crossing Vehicle"},
    {RiskSituation::kCarBlockingEgoLane, "Car Blocking Ego Lane"},
    {RiskSituation::kCongestion, "Congestion"},
    {RiskSituation::kCutIn, "Cut-In"},
    {RiskSituation::kJaywalking, "Jaywalking"},
    {RiskSituation::kTrafficLight, "Traffic Light"},
    {RiskSituation::kStopSign, "Stop Sign"},
}};

constexpr std::array<std::pair<AttentionState, std::string_view>, 3> kAttentionNames = {{
    {AttentionState::kLooking, "Looking"},
    {AttentionState::kNotLooking, "NotLooking"},
    {AttentionState::kNotSure, "NotSure"},
}};

constexpr std::array<std::pair<Occlusion, std::string_view>, 3> kOcclusionNames = {{
    {Occlusion::kNone, "none"},
    {Occlusion::kPartial, "partial"},
    {Occlusion::kFull, "full"},
}};

std::string describe_box(const BoundingBox& b) {
  std::ostringstream os;
  os << "[" << b.x_min << "," << b.y_min << "," << b.x_max << "," << b.y_max << "]";
  return os.str();
}

}  // namespace

bool BoundingBox::valid() const {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && x_min < x_max && y_min < y_max;
}

std::string_view to_string(AgentClass c) { return name_of(kClassNames, c); }
std::string_view to_string(DriverResponse r) { return name_of(kResponseNames, r); }
std::string_view to_string(DriverAction a) { return name_of(kActionNames, a); }
std::string_view to_string(RiskSituation s) { return name_of(kSituationNames, s); }
std::string_view to_string(AttentionState s) { return name_of(kAttentionNames, s); }
std::string_view to_string(Occlusion o) { return name_of(kOcclusionNames, o); }

std::optional<AgentClass> parse_agent_class(std::string_view tag) {
  return lookup(kClassNames, tag);
}
std::optional<DriverResponse> parse_response(std::string_view tag) {
  return lookup(kResponseNames, tag);
}
std::optional<DriverAction> parse_action(std::string_view tag) {
  return lookup(kActionNames, tag);
}
std::optional<RiskSituation> parse_situation(std::string_view tag) {
  return lookup(kSituationNames, tag);
}
std::optional<AttentionState> parse_attention(std::string_view tag) {
  return lookup(kAttentionNames, tag);
}
std::optional<Occlusion> parse_occlusion(std::string_view tag) {
  return lookup(kOcclusionNames, tag);
}

int Episode::d() const {
  if (frames.empty() || frames.front().nodes.empty()) return 0;
  return static_cast<int>(frames.front().nodes.front().feature.size());
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (!a.valid()) throw InvalidInput("iou: invalid box " + describe_box(a));
  if (!b.valid()) throw InvalidInput("iou: invalid box " + describe_box(b));
  const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

int find_slot(const Frame& frame, int track_id) {
  for (std::size_t s = 0; s < frame.nodes.size(); ++s) {
    if (frame.nodes[s].track_id == track_id) return static_cast<int>(s);
  }
  return -1;
}

std::vector<int> candidate_tracks(const Episode& e) {
  std::vector<int> ids;
  if (e.frames.empty()) return ids;
  for (const auto& node : e.last_frame().nodes) {
    if (node.present && node.cls != AgentClass::kEgo && node.track_id >= 0) {
      ids.push_back(node.track_id);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<Violation> validate_episode(const Episode& e) {
  std::vector<Violation> out;
  auto add = [&out](std::string field, int frame, std::string message) {
    out.push_back({std::move(field), frame, std::move(message)});
  };

  if (e.frames.empty()) {
    add("frames", 0, "episode has no frames (Z must be >= 1)");
    return out;
  }
  const std::size_t n = e.frames.front().nodes.size();
  const int d = e.d();
  if (n == 0) add("frames[1].nodes", 1, "frame has no slots");

  std::map<int, AgentClass> track_class;
  for (std::size_t fi = 0; fi < e.frames.size(); ++fi) {
    const Frame& f = e.frames[fi];
    const int t = static_cast<int>(fi) + 1;
    if (f.index != t) {
      add("frame.index", t, "expected index " + std::to_string(t) + ", got " + std::to_string(f.index));
    }
    if (f.nodes.size() != n) {
      add("frame.nodes", t, "expected " + std::to_string(n) + " slots, got " + std::to_string(f.nodes.size()));
      continue;
    }
    if (n == 0) continue;
    const AgentNode& ego = f.nodes[0];
    if (ego.cls != AgentClass::kEgo || !ego.present) {
      add("nodes[0]", t, "slot 0 must be the present ego node");
    }
    int ego_count = 0;
    std::set<int> seen_ids;
    for (std::size_t s = 0; s < n; ++s) {
      const AgentNode& node = f.nodes[s];
      const std::string where = "nodes[" + std::to_string(s) + "]";
      if (node.present && node.cls == AgentClass::kEgo) ++ego_count;
      if (node.feature.size() != d) {
        add(where + ".feat", t, "feature length " + std::to_string(node.feature.size()) +
                                    " != D=" + std::to_string(d));
        continue;
      }
      if (!node.feature.allFinite()) add(where + ".feat", t, "non-finite feature value");
      if (!node.present && !node.feature.isZero(0.0)) {
        add(where + ".feat", t, "absent node carries a nonzero feature");
      }
      if (node.track_id < 0) {
        if (node.present) add(where + ".id", t, "present node without a track id");
        continue;
      }
      if (!seen_ids.insert(node.track_id).second) {
        add(where + ".id", t, "duplicate track id " + std::to_string(node.track_id));
      }
      if (node.present && !node.box.valid()) add(where + ".box", t, "invalid box");
      auto [it, inserted] = track_class.emplace(node.track_id, node.cls);
      if (!inserted && it->second != node.cls) {
        add(where + ".class", t, "track " + std::to_string(node.track_id) + " changed class");
      }
    }
    if (ego_count != 1) {
      add("nodes.class", t, "expected exactly one ego node, found " + std::to_string(ego_count));
    }
  }

  if (e.actions.size() != e.frames.size()) {
    add("actions", 0, "expected " + std::to_string(e.frames.size()) + " action labels, got " +
                          std::to_string(e.actions.size()));
  }
  if (e.causal_track_id) {
    const Frame& last = e.last_frame();
    const int slot = find_slot(last, *e.causal_track_id);
    if (slot < 0 || !last.nodes[slot].present) {
      add("causal_id", e.z(), "causal track " + std::to_string(*e.causal_track_id) +
                                   " is not present in the final frame");
    } else if (last.nodes[slot].cls == AgentClass::kEgo) {
      add("causal_id", e.z(), "causal track cannot be the ego node");
    }
  }
  if (e.gt_box && !e.gt_box->valid()) add("gt_box", e.z(), "invalid ground-truth box");
  if (e.response == DriverResponse::kAlter && !e.gt_box) {
    add("gt_box", e.z(), "Alter episode without a ground-truth box");
  }
  return out;
}

}  // namespace riskid
