#pragma once

// Localization accuracy over IoU thresholds, average precision, the random
// selection floor and inter-rater agreement.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskid/core_types.hpp"

namespace riskid::metrics {

inline constexpr int kNumThresholds = 10;

// 0.50, 0.55, ..., 0.95
double iou_threshold(int k);

struct EvalRecord {
  int episode = 0;
  BoundingBox predicted;
  BoundingBox gt;
  RiskSituation situation = RiskSituation::kCrossingPedestrian;
};

struct AccuracyRow {
  std::array<double, kNumThresholds> acc{};  // percent correct with iou >= threshold
  double macc = 0.0;                          // mean of acc
  std::size_t count = 0;
};

struct MaccScores {
  AccuracyRow overall;
  std::map<RiskSituation, AccuracyRow> per_situation;  // only situations with records
  // Macro average over per_situation rows (equals overall when not grouped).
  AccuracyRow average;
};

// Throws InvalidInput on an empty record set.
MaccScores macc(const std::vector<EvalRecord>& records, bool per_class);

// All-points interpolated AP of `positive_class` against one-vs-rest labels.
// Equal scores are ranked as one block. Throws InvalidInput without positives.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels, int positive_class);

// One uniformly drawn final-frame candidate per episode, seeded per episode.
std::vector<EvalRecord> random_selection(const std::vector<Episode>& episodes, std::uint64_t seed,
                                         std::vector<int>* chosen_ids = nullptr);
MaccScores random_baseline(const std::vector<Episode>& episodes, std::uint64_t seed);

// ICC(2,1): two-way random effects, absolute agreement, single rater.
// Rows are subjects, columns raters. Perfect agreement returns exactly 1.
double icc(const Matrix& ratings);

struct MethodScores {
  std::string method;
  MaccScores scores;
};

// method,situation,acc@0.50,...,acc@0.95,mAcc with eight situation rows and an
// Average row per method; situations without records leave their cells empty.
void write_macc_csv(std::ostream& os, const std::vector<MethodScores>& methods);

struct ApRow {
  std::string method;
  std::array<std::optional<double>, 3> action_ap;    // Left, Right, Straight
  std::array<std::optional<double>, 2> response_ap;  // Continue, Alter
  double macc = 0.0;
};

double mean_present(const std::vector<std::optional<double>>& values);

void write_ap_csv(std::ostream& os, const std::vector<ApRow>& rows);

}  // namespace riskid::metrics
