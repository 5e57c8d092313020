#include "riskid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "riskid/errors.hpp"
#include "riskid/text_format.hpp"

namespace riskid::metrics {
namespace {

AccuracyRow score_rows(const std::vector<const EvalRecord*>& records) {
  AccuracyRow row;
  row.count = records.size();
  std::array<std::size_t, kNumThresholds> hits{};
  for (const EvalRecord* r : records) {
    const double o = iou(r->predicted, r->gt);
    for (int k = 0; k < kNumThresholds; ++k) {
      if (o >= iou_threshold(k)) ++hits[k];
    }
  }
  double total = 0.0;
  for (int k = 0; k < kNumThresholds; ++k) {
    row.acc[k] = 100.0 * static_cast<double>(hits[k]) / static_cast<double>(records.size());
    total += row.acc[k];
  }
  row.macc = total / kNumThresholds;
  return row;
}

std::string optional_cell(const std::optional<double>& v) { return v ? fixed(100.0 * *v, 2) : std::string(); }

}  // namespace

double iou_threshold(int k) { return static_cast<double>(50 + 5 * k) / 100.0; }

MaccScores macc(const std::vector<EvalRecord>& records, bool per_class) {
  if (records.empty()) throw InvalidInput("macc: empty record set");
  std::vector<const EvalRecord*> all;
  std::map<RiskSituation, std::vector<const EvalRecord*>> groups;
  for (const auto& r : records) {
    all.push_back(&r);
    groups[r.situation].push_back(&r);
  }
  MaccScores out;
  out.overall = score_rows(all);
  if (!per_class) {
    out.average = out.overall;
    return out;
  }
  AccuracyRow avg;
  for (const auto& [s, rows] : groups) {
    const AccuracyRow row = score_rows(rows);
    out.per_situation[s] = row;
    for (int k = 0; k < kNumThresholds; ++k) avg.acc[k] += row.acc[k];
    avg.macc += row.macc;
    avg.count += row.count;
  }
  const double n = static_cast<double>(groups.size());
  for (double& a : avg.acc) a /= n;
  avg.macc /= n;
  out.average = avg;
  return out;
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels, int positive_class) {
  if (scores.size() != labels.size()) throw InvalidInput("average_precision: scores and labels differ in length");
  const auto positives =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), positive_class));
  if (positives == 0) throw InvalidInput("average_precision: no positive labels");
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidInput("average_precision: non-finite score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // One operating point per distinct score.
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == positive_class) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

std::vector<EvalRecord> random_selection(const std::vector<Episode>& episodes, std::uint64_t seed,
                                         std::vector<int>* chosen_ids) {
  std::vector<EvalRecord> out;
  if (chosen_ids) chosen_ids->clear();
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& e = episodes[i];
    if (!e.gt_box) throw InvalidInput("random_baseline: episode " + std::to_string(i) + " has no gt_box");
    const std::vector<int> candidates = candidate_tracks(e);
    if (candidates.empty()) throw DegenerateScene("random_baseline: episode " + std::to_string(i) + " has no candidates");
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const int id = candidates[pick(rng)];
    const Frame& last = e.last_frame();
    out.push_back({static_cast<int>(i), last.nodes[find_slot(last, id)].box, *e.gt_box, e.situation});
    if (chosen_ids) chosen_ids->push_back(id);
  }
  return out;
}

MaccScores random_baseline(const std::vector<Episode>& episodes, std::uint64_t seed) {
  return macc(random_selection(episodes, seed), true);
}

double icc(const Matrix& ratings) {
  const Eigen::Index n = ratings.rows();
  const Eigen::Index k = ratings.cols();
  if (n < 2 || k < 2) throw InvalidInput("icc: need at least 2 subjects and 2 raters");
  if (!ratings.allFinite()) throw InvalidInput("icc: ratings must be finite");

  bool agree = true;
  for (Eigen::Index i = 0; i < n && agree; ++i) {
    for (Eigen::Index j = 1; j < k; ++j) agree = agree && ratings(i, j) == ratings(i, 0);
  }
  if (agree) return 1.0;

  const double grand = ratings.mean();
  const Eigen::VectorXd row_mean = ratings.rowwise().mean();
  const Eigen::RowVectorXd col_mean = ratings.colwise().mean();
  const double ss_rows = static_cast<double>(k) * (row_mean.array() - grand).square().sum();
  const double ss_cols = static_cast<double>(n) * (col_mean.array() - grand).square().sum();
  double ss_err = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double r = ratings(i, j) - row_mean[i] - col_mean[j] + grand;
      ss_err += r * r;
    }
  }
  const double ms_rows = ss_rows / static_cast<double>(n - 1);
  const double ms_cols = ss_cols / static_cast<double>(k - 1);
  const double ms_err = ss_err / static_cast<double>((n - 1) * (k - 1));
  const double denom = ms_rows + static_cast<double>(k - 1) * ms_err +
                       static_cast<double>(k) * (ms_cols - ms_err) / static_cast<double>(n);
  if (!(denom > 0.0)) throw InvalidInput("icc: degenerate rating matrix");
  return (ms_rows - ms_err) / denom;
}

void write_macc_csv(std::ostream& os, const std::vector<MethodScores>& methods) {
  os << "method,situation";
  for (int k = 0; k < kNumThresholds; ++k) os << ",acc@" << fixed(iou_threshold(k), 2);
  os << ",mAcc\n";
  auto emit = [&os](const std::string& method, std::string_view label, const AccuracyRow* row) {
    os << method << ',' << label;
    for (int k = 0; k < kNumThresholds; ++k) os << ',' << (row ? fixed(row->acc[k], 2) : "");
    os << ',' << (row ? fixed(row->macc, 2) : "") << '\n';
  };
  for (const auto& m : methods) {
    for (RiskSituation s : kAllSituations) {
      auto it = m.scores.per_situation.find(s);
      emit(m.method, to_string(s), it == m.scores.per_situation.end() ? nullptr : &it->second);
    }
    emit(m.method, "Average", &m.scores.average);
  }
}

double mean_present(const std::vector<std::optional<double>>& values) {
  double total = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (v) {
      total += *v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : total / n;
}

void write_ap_csv(std::ostream& os, const std::vector<ApRow>& rows) {
  os << "method,Left,Right,Straight,action mAP,Continue,Alter,response mAP,mAcc\n";
  for (const auto& r : rows) {
    os << r.method;
    for (const auto& v : r.action_ap) os << ',' << optional_cell(v);
    os << ',' << fixed(100.0 * mean_present({r.action_ap.begin(), r.action_ap.end()}), 2);
    for (const auto& v : r.response_ap) os << ',' << optional_cell(v);
    os << ',' << fixed(100.0 * mean_present({r.response_ap.begin(), r.response_ap.end()}), 2);
    os << ',' << fixed(r.macc, 2) << '\n';
  }
}

}  // namespace riskid::metrics
