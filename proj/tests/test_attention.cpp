#include <doctest.h>

#include <cmath>
#include <sstream>

#include "riskid/attention.hpp"
#include "riskid/errors.hpp"
#include "support.hpp"

using namespace riskid;
using namespace riskid::attention;

namespace {

Anchor anchor_at(BoundingBox box, double p = 0.5, double a = 0.5) {
  Anchor an;
  an.box = box;
  an.objectness = p;
  an.attn = a;
  return an;
}

}  // namespace

TEST_CASE("anchor matching uses an inclusive IoU threshold and lowest-index ties") {
  const std::vector<AttnGroundTruth> gts{{{0, 0, 10, 10}, true, true}, {{0, 0, 10, 10}, true, false},
                                         {{100, 100, 110, 110}, true, false}};
  // IoU([0,0,10,10], [0,0,10,20]) = 0.5 exactly.
  const std::vector<Anchor> anchors{anchor_at({0, 0, 10, 20}), anchor_at({0, 0, 10, 21}), anchor_at({100, 100, 110, 110}),
                                    anchor_at({50, 50, 60, 60})};
  CHECK(match_anchors(anchors, gts, 0.5) == std::vector<int>{0, -1, 2, -1});
  CHECK(match_anchors(anchors, gts, 0.9) == std::vector<int>{-1, -1, 2, -1});
}

TEST_CASE("box encoding") {
  const auto t = encode_box({0, 0, 10, 20}, {5, 0, 25, 40});
  CHECK(t[0] == doctest::Approx(1.0));
  CHECK(t[1] == doctest::Approx(0.5));
  CHECK(t[2] == doctest::Approx(std::log(2.0)));
  CHECK(t[3] == doctest::Approx(std::log(2.0)));
  const auto zero = encode_box({3, 4, 8, 9}, {3, 4, 8, 9});
  for (double v : zero) CHECK(v == 0.0);
}

TEST_CASE("half-confident positive anchor gives ln 2 attention loss") {
  const std::vector<AttnGroundTruth> gts{{{0, 0, 10, 10}, true, true}};
  const std::vector<Anchor> anchors{anchor_at({0, 0, 10, 10}, 0.5, 0.5)};
  const AttnLoss loss = attention_loss(anchors, match_anchors(anchors, gts, 0.5), gts, {});
  CHECK(std::abs(loss.attn - std::log(2.0)) < 1e-9);
  CHECK(std::abs(loss.cls - std::log(2.0)) < 1e-9);
  CHECK(loss.box == 0.0);
  CHECK(loss.total == doctest::Approx(loss.cls + 0.25 * loss.attn).epsilon(1e-15));
}

TEST_CASE("loss is affine in alpha") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<AttnGroundTruth> gts{{{0, 0, 40, 40}, true, true}, {{200, 200, 230, 260}, true, false}};
  std::vector<Anchor> anchors;
  for (const BoundingBox& b : {BoundingBox{2, 0, 40, 42}, BoundingBox{200, 205, 232, 260}, BoundingBox{500, 500, 520, 520}}) {
    Anchor a = anchor_at(b, u(rng), u(rng));
    for (double& r : a.regression) r = u(rng) - 0.5;
    anchors.push_back(a);
  }
  const auto assignment = match_anchors(anchors, gts, 0.5);
  CHECK(assignment == std::vector<int>{0, 1, -1});
  double totals[3];
  for (int k = 0; k < 3; ++k) {
    AttnLossConfig cfg;
    cfg.alpha = k;
    totals[k] = attention_loss(anchors, assignment, gts, cfg).total;
  }
  const AttnLoss base = attention_loss(anchors, assignment, gts, {});
  CHECK(totals[0] == doctest::Approx(base.cls + base.box).epsilon(1e-14));
  CHECK(totals[1] - totals[0] == doctest::Approx(base.attn).epsilon(1e-12));
  CHECK(totals[2] - totals[1] == doctest::Approx(totals[1] - totals[0]).epsilon(1e-12));
}

TEST_CASE("no positives leaves only the classification term") {
  const std::vector<AttnGroundTruth> gts{{{0, 0, 10, 10}, true, true}};
  const std::vector<Anchor> anchors{anchor_at({100, 100, 110, 110}, 0.2, 0.9)};
  const AttnLoss loss = attention_loss(anchors, match_anchors(anchors, gts, 0.5), gts, {});
  CHECK(loss.box == 0.0);
  CHECK(loss.attn == 0.0);
  CHECK(loss.cls == doctest::Approx(-std::log(0.8)));
}

TEST_CASE("non-face positives carry box but no attention term") {
  const std::vector<AttnGroundTruth> gts{{{0, 0, 10, 10}, false, false}};
  const std::vector<Anchor> anchors{anchor_at({0, 0, 10, 10}, 0.5, 0.1)};
  const AttnLoss loss = attention_loss(anchors, {0}, gts, {});
  CHECK(loss.attn == 0.0);
}

TEST_CASE("attention loss gradients match finite differences") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::uniform_real_distribution<double> r(-1.5, 1.5);
  const std::vector<AttnGroundTruth> gts{{{0, 0, 40, 40}, true, true}, {{200, 200, 230, 260}, true, false}};
  const std::vector<BoundingBox> boxes{{2, 0, 40, 42}, {200, 205, 232, 260}, {500, 500, 520, 520}, {0, 0, 38, 40}};
  const std::vector<int> assignment{0, 1, -1, 0};
  for (int trial = 0; trial < 5; ++trial) {
    Matrix obj(1, 4), reg(4, 4), att(1, 4);
    for (Eigen::Index i = 0; i < 4; ++i) {
      obj(0, i) = u(rng);
      att(0, i) = u(rng);
      for (int c = 0; c < 4; ++c) reg(i, c) = r(rng);
    }
    ad::Tape tape;
    Matrix go = Matrix::Zero(1, 4), gr = Matrix::Zero(4, 4), ga = Matrix::Zero(1, 4);
    const AttnLossVars v = attention_loss_var({tape.variable(obj, &go), tape.variable(reg, &gr), tape.variable(att, &ga)},
                                              boxes, assignment, gts, {});
    tape.backward(v.total);
    auto f = [&](const Matrix& o, const Matrix& rg, const Matrix& a) {
      ad::Tape t;
      return attention_loss_var({t.constant(o), t.constant(rg), t.constant(a)}, boxes, assignment, gts, {})
          .total.value()(0, 0);
    };
    const double h = 1e-6;
    for (Matrix* m : {&obj, &reg, &att}) {
      const Matrix& g = m == &obj ? go : (m == &reg ? gr : ga);
      for (Eigen::Index i = 0; i < m->size(); ++i) {
        const double saved = m->data()[i];
        m->data()[i] = saved + h;
        const double up = f(obj, reg, att);
        m->data()[i] = saved - h;
        const double down = f(obj, reg, att);
        m->data()[i] = saved;
        CHECK(g.data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("classifier probabilities and shape checks") {
  ModelConfig cfg;
  std::mt19937_64 rng(3);
  ParameterSet p;
  init_params(p, cfg, rng);
  Vector face(2);
  face << 0.3, -0.7;
  const auto probs = classify_attention(face, p);
  CHECK(probs[0] + probs[1] == doctest::Approx(1.0).epsilon(1e-15));
  const Matrix logits = face.transpose() * p.at("attention.weight") + p.at("attention.bias");
  CHECK(probs[0] == doctest::Approx(1.0 / (1.0 + std::exp(logits(0, 1) - logits(0, 0)))));
  CHECK_THROWS_AS(classify_attention(Vector::Zero(3), p), ShapeError);
}

TEST_CASE("momentum SGD learns a separable gaze rule") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<AttentionSample> samples;
  for (int i = 0; i < 400; ++i) {
    AttentionSample s;
    s.looking = i % 2 == 0;
    const double theta = s.looking ? 0.4 * u(rng) : (u(rng) > 0 ? 1.0 : -1.0) * (1.5 + 1.5 * std::abs(u(rng)));
    s.face = Vector(2);
    s.face << std::cos(theta), std::sin(theta);
    samples.push_back(s);
  }
  ModelConfig cfg;
  ParameterSet p;
  std::mt19937_64 init(5);
  init_params(p, cfg, init);
  const double before = classifier_loss(samples, p);
  AttentionTrainConfig tc;
  tc.seed = 9;
  const std::vector<double> curve = train_attention(p, samples, tc);
  CHECK(curve.size() == 50);
  CHECK(classifier_loss(samples, p) < before);
  CHECK(classifier_accuracy(samples, p) > 0.95);

  ParameterSet again;
  std::mt19937_64 init2(5);
  init_params(again, cfg, init2);
  train_attention(again, samples, tc);
  CHECK(again == p);
}

TEST_CASE("looking score needs a person with a face") {
  std::mt19937_64 rng(6);
  testing::EpisodeShape shape;
  shape.faces = true;
  Episode e = testing::random_episode(rng, shape);
  ModelConfig cfg;
  ParameterSet p;
  init_params(p, cfg, rng);
  const double s = looking_score(e, 1, p);
  CHECK(s == classify_attention(*e.last_frame().nodes[1].face, p)[0]);
  for (int id = 2; id < e.n(); ++id) {
    if (e.last_frame().nodes[id].cls != AgentClass::kPerson) {
      CHECK_THROWS_AS(looking_score(e, id, p), InvalidInput);
      break;
    }
  }
  std::size_t labelled = 0;
  for (const auto& f : e.frames) {
    for (const auto& node : f.nodes) {
      labelled += node.present && node.face && node.attention != AttentionState::kNotSure;
    }
  }
  CHECK(attention_samples({e}).size() == labelled);
  CHECK(labelled >= 1);
}

TEST_CASE("annotation ingest warns about tiny crops") {
  std::istringstream in(
      R"({"episode":1,"track_id":2,"label":"Looking","body_box":[0,0,40,200],"face_box":[5,5,30,30],"occlusion":"none","face":[1,0]})"
      "\n"
      R"({"episode":1,"track_id":3,"label":"NotLooking","body_box":[0,0,40,60],"face_box":[5,5,12,12],"occlusion":"partial","face":null})"
      "\n");
  const AttentionIngest got = ingest_attention(in);
  REQUIRE(got.records.size() == 2);
  CHECK(got.records[0].label.label == AttentionState::kLooking);
  CHECK(got.records[1].label.occlusion == Occlusion::kPartial);
  CHECK_FALSE(got.records[1].face.has_value());
  CHECK(got.warnings.size() == 2);

  std::istringstream bad(R"({"episode":1,"track_id":2,"label":"Maybe","body_box":[0,0,40,200]})");
  CHECK_THROWS_AS(ingest_attention(bad), ParseError);
}

TEST_CASE("attention CSV") {
  std::ostringstream os;
  write_attention_csv(os, {{3, 4, 0.25}});
  CHECK(os.str() == "episode,track_id,s_look\n3,4,0.250000\n");
}
