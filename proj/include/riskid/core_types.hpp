#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace riskid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Axis-aligned box in image pixel coordinates.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool valid() const;
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  bool operator==(const BoundingBox&) const = default;
};

enum class AgentClass {
  kPerson,
  kBicycle,
  kCar,
  kMotorcycle,
  kBus,
  kTruck,
  kTrafficLight,
  kStopSign,
  kEgo,
};
inline constexpr int kNumAgentClasses = 9;

enum class DriverResponse { kContinue, kAlter };

// Order fixes the column layout of every action distribution: left, right, straight.
enum class DriverAction { kLeftTurn, kRightTurn, kGoStraight };
inline constexpr int kNumActions = 3;

enum class RiskSituation {
  kCrossingPedestrian,
  kCrossingVehicle,
  kCarBlockingEgoLane,
  kCongestion,
  kCutIn,
  kJaywalking,
  kTrafficLight,
  kStopSign,
};
inline constexpr int kNumSituations = 8;
inline constexpr std::array<RiskSituation, kNumSituations> kAllSituations = {
    RiskSituation::kCrossingPedestrian, RiskSituation::kCrossingVehicle,
    RiskSituation::kCarBlockingEgoLane, RiskSituation::kCongestion,
    RiskSituation::kCutIn,              RiskSituation::kJaywalking,
    RiskSituation::kTrafficLight,       RiskSituation::kStopSign,
};

enum class AttentionState { kLooking, kNotLooking, kNotSure };
enum class Occlusion { kNone, kPartial, kFull };

std::string_view to_string(AgentClass c);
std::string_view to_string(DriverResponse r);
std::string_view to_string(DriverAction a);
std::string_view to_string(RiskSituation s);
std::string_view to_string(AttentionState s);
std::string_view to_string(Occlusion o);

// Parsers return nullopt for tags outside the closed set.
std::optional<AgentClass> parse_agent_class(std::string_view tag);
std::optional<DriverResponse> parse_response(std::string_view tag);
std::optional<DriverAction> parse_action(std::string_view tag);
std::optional<RiskSituation> parse_situation(std::string_view tag);
std::optional<AttentionState> parse_attention(std::string_view tag);
std::optional<Occlusion> parse_occlusion(std::string_view tag);

// One slot of a frame. Padding slots use track_id -1 and present=false.
struct AgentNode {
  int track_id = -1;
  AgentClass cls = AgentClass::kCar;
  BoundingBox box;
  Vector feature;
  bool present = false;
  // Face-crop embedding and gaze label; only persons carry them.
  std::optional<Vector> face;
  std::optional<AttentionState> attention;
};

struct Frame {
  int index = 1;  // 1-based position in the clip
  std::vector<AgentNode> nodes;
};

struct Episode {
  std::vector<Frame> frames;
  DriverResponse response = DriverResponse::kContinue;
  std::vector<DriverAction> actions;
  RiskSituation situation = RiskSituation::kCrossingPedestrian;
  std::optional<int> causal_track_id;
  std::optional<BoundingBox> gt_box;

  int z() const { return static_cast<int>(frames.size()); }
  int n() const { return frames.empty() ? 0 : static_cast<int>(frames.front().nodes.size()); }
  int d() const;
  const Frame& last_frame() const { return frames.back(); }
};

// Annotation record for one pedestrian in the attentiveness subset.
struct AttentionLabel {
  AttentionState label = AttentionState::kNotSure;
  std::optional<BoundingBox> face_box;
  BoundingBox body_box;
  Occlusion occlusion = Occlusion::kNone;
};

struct Violation {
  std::string field;
  int frame = 0;  // 0 when the violation is episode-level
  std::string message;
};

// Intersection over union. Throws InvalidInput for boxes with non-positive extent.
double iou(const BoundingBox& a, const BoundingBox& b);

std::vector<Violation> validate_episode(const Episode& e);

// Slot of `track_id` in `frame`, or -1.
int find_slot(const Frame& frame, int track_id);

// Non-ego track ids present in the final frame, ascending.
std::vector<int> candidate_tracks(const Episode& e);

}  // namespace riskid
