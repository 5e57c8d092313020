#include "riskid/attention.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "riskid/episode_io.hpp"
#include "riskid/errors.hpp"
#include "riskid/text_format.hpp"

namespace riskid::attention {
namespace {

constexpr double kMinBodyHeight = 70.0;
constexpr double kMinFaceSize = 10.0;

Matrix selector(const std::vector<int>& rows, Eigen::Index total) {
  Matrix s = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), total);
  for (std::size_t r = 0; r < rows.size(); ++r) s(static_cast<Eigen::Index>(r), rows[r]) = 1.0;
  return s;
}

}  // namespace

void AttnLossConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("attention alpha must be >= 0");
  if (!(lambda_iou > 0.0 && lambda_iou < 1.0)) throw ConfigError("attention lambda_iou must lie in (0,1)");
}

void AttentionTrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("attention epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("attention batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("attention learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("attention momentum must lie in [0,1)");
}

std::vector<int> match_anchors(const std::vector<Anchor>& anchors, const std::vector<AttnGroundTruth>& gts,
                               double lambda_iou) {
  std::vector<int> out(anchors.size(), -1);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    double best = -1.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double o = iou(anchors[i].box, gts[g].face_box);
      if (o > best) {
        best = o;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best >= lambda_iou) out[i] = best_gt;
  }
  return out;
}

std::array<double, 4> encode_box(const BoundingBox& anchor, const BoundingBox& gt) {
  const double aw = anchor.width();
  const double ah = anchor.height();
  const double acx = anchor.x_min + 0.5 * aw;
  const double acy = anchor.y_min + 0.5 * ah;
  const double gcx = gt.x_min + 0.5 * gt.width();
  const double gcy = gt.y_min + 0.5 * gt.height();
  return {(gcx - acx) / aw, (gcy - acy) / ah, std::log(gt.width() / aw), std::log(gt.height() / ah)};
}

AttnLossVars attention_loss_var(const AnchorOutputs& out, const std::vector<BoundingBox>& anchor_boxes,
                                const std::vector<int>& assignment, const std::vector<AttnGroundTruth>& gts,
                                const AttnLossConfig& cfg) {
  cfg.validate();
  const Eigen::Index a = static_cast<Eigen::Index>(assignment.size());
  if (a == 0) throw InvalidInput("attention_loss: no anchors");
  if (out.objectness.cols() != a || out.attn.cols() != a || out.regression.rows() != a ||
      out.regression.cols() != 4 || static_cast<Eigen::Index>(anchor_boxes.size()) != a) {
    throw ShapeError("attention_loss: anchor outputs do not match the assignment");
  }

  Matrix obj_target = Matrix::Zero(1, a);
  std::vector<int> positives;
  std::vector<int> face_positives;
  for (Eigen::Index i = 0; i < a; ++i) {
    const int g = assignment[i];
    if (g < 0) continue;
    if (g >= static_cast<int>(gts.size())) throw InvalidInput("attention_loss: assignment refers to a missing gt");
    positives.push_back(static_cast<int>(i));
    if (gts[g].is_face) {
      obj_target(0, i) = 1.0;
      face_positives.push_back(static_cast<int>(i));
    }
  }

  AttnLossVars v;
  v.cls = ad::scale(ad::binary_cross_entropy(out.objectness, obj_target), 1.0 / static_cast<double>(a));
  v.total = v.cls;
  ad::Tape& tape = *out.objectness.tape();
  if (!positives.empty()) {
    Matrix targets(static_cast<Eigen::Index>(positives.size()), 4);
    for (std::size_t r = 0; r < positives.size(); ++r) {
      const auto t = encode_box(anchor_boxes[positives[r]], gts[assignment[positives[r]]].face_box);
      for (int k = 0; k < 4; ++k) targets(static_cast<Eigen::Index>(r), k) = t[k];
    }
    ad::Var picked = ad::matmul(tape.constant(selector(positives, a)), out.regression);
    v.box = ad::scale(ad::smooth_l1(picked, targets), 1.0 / static_cast<double>(positives.size()));
    v.total = ad::add(v.total, *v.box);
  }
  if (!face_positives.empty()) {
    Matrix targets(1, static_cast<Eigen::Index>(face_positives.size()));
    for (std::size_t r = 0; r < face_positives.size(); ++r) {
      targets(0, static_cast<Eigen::Index>(r)) = gts[assignment[face_positives[r]]].looking ? 1.0 : 0.0;
    }
    ad::Var picked = ad::matmul_nt(out.attn, tape.constant(selector(face_positives, a)));
    v.attn = ad::scale(ad::binary_cross_entropy(picked, targets), 1.0 / static_cast<double>(face_positives.size()));
    v.total = ad::add(v.total, ad::scale(*v.attn, cfg.alpha));
  }
  return v;
}

AttnLoss attention_loss(const std::vector<Anchor>& anchors, const std::vector<int>& assignment,
                        const std::vector<AttnGroundTruth>& gts, const AttnLossConfig& cfg) {
  if (anchors.size() != assignment.size()) throw InvalidInput("attention_loss: one assignment per anchor required");
  const Eigen::Index a = static_cast<Eigen::Index>(anchors.size());
  Matrix obj(1, a), reg(a, 4), att(1, a);
  std::vector<BoundingBox> boxes;
  for (Eigen::Index i = 0; i < a; ++i) {
    const Anchor& an = anchors[i];
    obj(0, i) = an.objectness;
    att(0, i) = an.attn;
    for (int k = 0; k < 4; ++k) reg(i, k) = an.regression[k];
    boxes.push_back(an.box);
  }
  ad::Tape tape;
  AnchorOutputs out{tape.constant(obj), tape.constant(reg), tape.constant(att)};
  AttnLossVars v = attention_loss_var(out, boxes, assignment, gts, cfg);
  AttnLoss loss;
  loss.total = v.total.value()(0, 0);
  loss.cls = v.cls.value()(0, 0);
  loss.box = v.box ? v.box->value()(0, 0) : 0.0;
  loss.attn = v.attn ? v.attn->value()(0, 0) : 0.0;
  return loss;
}

void init_params(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng) {
  params.add("attention.weight", init_uniform(cfg.face_dim, 2, rng));
  params.add("attention.bias", Matrix::Zero(1, 2));
}

ad::Var attention_logits_var(ParamBinder& bind, ad::Var faces) {
  return ad::add_row(ad::matmul(faces, bind("attention.weight")), bind("attention.bias"));
}

std::array<double, 2> classify_attention(const Vector& face, const ParameterSet& params) {
  const Matrix& w = params.at("attention.weight");
  if (face.size() != w.rows()) {
    throw ShapeError("classify_attention: expected a face embedding of length " + std::to_string(w.rows()) +
                     ", got " + std::to_string(face.size()));
  }
  const Matrix logits = face.transpose() * w + params.at("attention.bias");
  const Matrix p = ad::softmax_rows(logits);
  return {p(0, 0), p(0, 1)};
}

double looking_score(const Episode& episode, int track_id, const ParameterSet& params) {
  if (episode.frames.empty()) throw InvalidInput("looking_score: episode has no frames");
  const Frame& last = episode.last_frame();
  const int slot = find_slot(last, track_id);
  if (slot < 0) throw InvalidInput("looking_score: track " + std::to_string(track_id) + " not in the final frame");
  const AgentNode& node = last.nodes[slot];
  if (node.cls != AgentClass::kPerson) {
    throw InvalidInput("looking_score: track " + std::to_string(track_id) + " is a " +
                       std::string(to_string(node.cls)) + ", not a person");
  }
  if (!node.face) throw InvalidInput("looking_score: track " + std::to_string(track_id) + " has no face embedding");
  return classify_attention(*node.face, params)[0];
}

std::vector<AttentionSample> attention_samples(const std::vector<Episode>& episodes) {
  std::vector<AttentionSample> out;
  for (const Episode& e : episodes) {
    for (const Frame& f : e.frames) {
      for (const AgentNode& n : f.nodes) {
        if (!n.present || n.cls != AgentClass::kPerson || !n.face || !n.attention) continue;
        if (*n.attention == AttentionState::kNotSure) continue;
        out.push_back({*n.face, *n.attention == AttentionState::kLooking});
      }
    }
  }
  return out;
}

namespace {

Matrix stack_faces(const std::vector<AttentionSample>& samples, const std::vector<std::size_t>& idx) {
  Matrix m(static_cast<Eigen::Index>(idx.size()), samples[idx.front()].face.size());
  for (std::size_t r = 0; r < idx.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = samples[idx[r]].face.transpose();
  return m;
}

// Mean cross entropy over the rows of a batch; label 0 is Looking.
ad::Var batch_loss(ParamBinder& bind, const std::vector<AttentionSample>& samples,
                   const std::vector<std::size_t>& idx) {
  ad::Tape& tape = bind.tape();
  ad::Var logits = attention_logits_var(bind, tape.constant(stack_faces(samples, idx)));
  const Matrix p = ad::softmax_rows(logits.value());
  double loss = 0.0;
  Matrix d = p;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const int label = samples[idx[r]].looking ? 0 : 1;
    loss -= std::log(p(static_cast<Eigen::Index>(r), label));
    d(static_cast<Eigen::Index>(r), label) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  Matrix v(1, 1);
  v(0, 0) = loss * inv;
  d *= inv;
  return tape.record(std::move(v), {logits}, [logits, d](ad::Tape& t, const Matrix& g) {
    t.accumulate(logits, d * g(0, 0));
  });
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

double classifier_loss(const std::vector<AttentionSample>& samples, const ParameterSet& params) {
  if (samples.empty()) throw InvalidInput("classifier_loss: no samples");
  ad::Tape tape;
  ParamBinder bind(tape, params, nullptr);
  return batch_loss(bind, samples, all_indices(samples.size())).value()(0, 0);
}

double classifier_accuracy(const std::vector<AttentionSample>& samples, const ParameterSet& params) {
  if (samples.empty()) throw InvalidInput("classifier_accuracy: no samples");
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const auto p = classify_attention(s.face, params);
    if ((p[0] > p[1]) == s.looking) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::vector<double> train_attention(ParameterSet& params, const std::vector<AttentionSample>& samples,
                                    const AttentionTrainConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw InvalidInput("train_attention: no samples");
  ParameterSet velocity;
  velocity.add("attention.weight", Matrix::Zero(params.at("attention.weight").rows(), 2));
  velocity.add("attention.bias", Matrix::Zero(1, 2));
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order = all_indices(samples.size());
  std::vector<double> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      ParameterSet grads = velocity.zeros_like();
      {
        ad::Tape tape;
        ParamBinder bind(tape, params, &grads);
        ad::Var loss = batch_loss(bind, samples, idx);
        epoch_loss += loss.value()(0, 0);
        tape.backward(loss);
      }
      for (auto& [name, v] : velocity) {
        v = cfg.momentum * v + grads.at(name);
        params.at(name) -= cfg.learning_rate * v;
      }
      ++batches;
    }
    history.push_back(epoch_loss / static_cast<double>(batches));
  }
  return history;
}

namespace {

AttentionAnnotation parse_annotation(const Json& j, int line, std::vector<std::string>& warnings) {
  const std::string where = "line " + std::to_string(line) + ": ";
  auto need = [&](const char* field) -> const Json& {
    if (!j.contains(field)) throw ParseError(where + "missing field '" + field + "'");
    return j.at(field);
  };
  AttentionAnnotation a;
  try {
    a.episode = need("episode").get<int>();
    a.track_id = need("track_id").get<int>();
    const auto label = parse_attention(need("label").get<std::string>());
    if (!label) throw ParseError(where + "unknown attention label '" + j.at("label").get<std::string>() + "'");
    a.label.label = *label;
    a.label.body_box = box_from_json(need("body_box"), "body_box");
    if (j.contains("face_box") && !j.at("face_box").is_null()) a.label.face_box = box_from_json(j.at("face_box"), "face_box");
    const auto occ = parse_occlusion(j.value("occlusion", std::string("none")));
    if (!occ) throw ParseError(where + "unknown occlusion flag '" + j.at("occlusion").get<std::string>() + "'");
    a.label.occlusion = *occ;
    if (j.contains("face") && !j.at("face").is_null()) {
      const auto v = j.at("face").get<std::vector<double>>();
      a.face = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    throw ParseError(msg.rfind("line ", 0) == 0 ? msg : where + msg);
  } catch (const Json::exception& e) {
    throw ParseError(where + e.what());
  }
  if (!(a.label.body_box.height() > kMinBodyHeight)) {
    warnings.push_back(where + "body box of track " + std::to_string(a.track_id) + " is not taller than 70 px");
  }
  if (a.label.face_box && !(a.label.face_box->width() > kMinFaceSize && a.label.face_box->height() > kMinFaceSize)) {
    warnings.push_back(where + "face box of track " + std::to_string(a.track_id) + " is not larger than 10 px");
  }
  return a;
}

}  // namespace

AttentionIngest ingest_attention(std::istream& in) {
  AttentionIngest out;
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
    out.records.push_back(parse_annotation(j, line, out.warnings));
  }
  return out;
}

AttentionIngest ingest_attention(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open attention annotations '" + path + "'");
  return ingest_attention(in);
}

void write_attention_csv(std::ostream& os, const std::vector<AttentionRow>& rows) {
  os << "episode,track_id,s_look\n";
  for (const auto& r : rows) os << r.episode << ',' << r.track_id << ',' << fixed(r.s_look) << '\n';
}

}  // namespace riskid::attention
