#pragma once

// Pedestrian attentiveness: a face-embedding classifier and the multi-task
// detection head loss (objectness + box regression + Looking probability).

#include <array>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "riskid/autodiff.hpp"
#include "riskid/core_types.hpp"
#include "riskid/model_config.hpp"
#include "riskid/params.hpp"

namespace riskid::attention {

struct Anchor {
  BoundingBox box;
  double objectness = 0.5;             // p_i
  std::array<double, 4> regression{};  // t_i, centre-size offsets
  double attn = 0.5;                   // a_i, Looking probability
};

struct AttnGroundTruth {
  BoundingBox face_box;
  bool is_face = true;
  bool looking = false;
};

struct AttnLossConfig {
  double alpha = 0.25;
  double lambda_iou = 0.5;

  void validate() const;
};

// Matched gt index per anchor, -1 for negatives. Positive iff the best IoU is
// >= lambda_iou; ties go to the lowest gt index.
std::vector<int> match_anchors(const std::vector<Anchor>& anchors, const std::vector<AttnGroundTruth>& gts,
                               double lambda_iou);

// (dx, dy, dw, dh): centre offsets scaled by the anchor size, log size ratios.
std::array<double, 4> encode_box(const BoundingBox& anchor, const BoundingBox& gt);

struct AttnLoss {
  double total = 0.0;
  double cls = 0.0;
  double box = 0.0;
  double attn = 0.0;
};

// L_cls: mean BCE of objectness over all anchors. L_box: smooth-L1 summed over
// the four offsets, averaged over positives. L_attn: mean BCE of a_i over
// positives, 0 without positives. total = cls + box + alpha * attn.
AttnLoss attention_loss(const std::vector<Anchor>& anchors, const std::vector<int>& assignment,
                        const std::vector<AttnGroundTruth>& gts, const AttnLossConfig& cfg);

// Tape form over 1 x A objectness, A x 4 regression and 1 x A attention rows.
struct AnchorOutputs {
  ad::Var objectness;
  ad::Var regression;
  ad::Var attn;
};

struct AttnLossVars {
  ad::Var total;
  ad::Var cls;
  std::optional<ad::Var> box;
  std::optional<ad::Var> attn;
};

AttnLossVars attention_loss_var(const AnchorOutputs& out, const std::vector<BoundingBox>& anchor_boxes,
                                const std::vector<int>& assignment, const std::vector<AttnGroundTruth>& gts,
                                const AttnLossConfig& cfg);

// attention.weight (face_dim x 2) and attention.bias, logits {Looking, NotLooking}.
void init_params(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng);

// (p_looking, p_not_looking). Throws ShapeError on a wrong embedding length.
std::array<double, 2> classify_attention(const Vector& face, const ParameterSet& params);
ad::Var attention_logits_var(ParamBinder& bind, ad::Var faces);

// Looking probability of a person track at the final frame.
double looking_score(const Episode& episode, int track_id, const ParameterSet& params);

struct AttentionSample {
  Vector face;
  bool looking = false;
};

// Face embeddings of labelled persons in every frame; NotSure is dropped.
std::vector<AttentionSample> attention_samples(const std::vector<Episode>& episodes);

struct AttentionTrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 0.001;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

// Mean cross entropy of the classifier on `samples`.
double classifier_loss(const std::vector<AttentionSample>& samples, const ParameterSet& params);
double classifier_accuracy(const std::vector<AttentionSample>& samples, const ParameterSet& params);

// SGD with momentum on attention.* only. Returns the mean loss of each epoch.
std::vector<double> train_attention(ParameterSet& params, const std::vector<AttentionSample>& samples,
                                    const AttentionTrainConfig& cfg);

struct AttentionAnnotation {
  int episode = 0;
  int track_id = -1;
  AttentionLabel label;
  std::optional<Vector> face;
};

struct AttentionIngest {
  std::vector<AttentionAnnotation> records;
  std::vector<std::string> warnings;
};

// JSONL, one pedestrian per line:
// {"episode","track_id","label","body_box","face_box"|null,"occlusion","face"|null}
// Bodies not taller than 70 px and faces not larger than 10 px are kept but warned about.
AttentionIngest ingest_attention(std::istream& in);
AttentionIngest ingest_attention(const std::string& path);

struct AttentionRow {
  int episode = 0;
  int track_id = -1;
  double s_look = 0.5;
};

void write_attention_csv(std::ostream& os, const std::vector<AttentionRow>& rows);

}  // namespace riskid::attention
