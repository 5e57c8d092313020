#include <doctest.h>

#include <cmath>
#include <sstream>

#include "riskid/errors.hpp"
#include "riskid/synthgen.hpp"
#include "riskid/train.hpp"

using namespace riskid;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.iterations = 12;
  c.batch_size = 4;
  c.eval_every = 5;
  c.seed = 3;
  c.learning_rate = 0.01;
  c.model.d = 16;
  c.model.hidden = 6;
  c.model.response_hidden = 6;
  return c;
}

const std::vector<Episode>& tiny_data() {
  static const std::vector<Episode> eps = [] {
    synth::WorldConfig w;
    w.seed = 41;
    w.d = 16;
    w.n_agents_range = {2, 4};
    return synth::generate(w, 24);
  }();
  return eps;
}

}  // namespace

TEST_CASE("config validation and key-value round trip") {
  TrainConfig c = tiny_config();
  c.model.p_e = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.model.use_action_branch = false;
  CHECK_NOTHROW(c.validate());

  const TrainConfig t = tiny_config();
  const TrainConfig back = TrainConfig::from_kv(KeyValueConfig::parse(t.to_kv().dump()));
  CHECK(back.model == t.model);
  CHECK(back.iterations == t.iterations);
  CHECK(back.learning_rate == t.learning_rate);
  CHECK(TrainConfig::desk().iterations == 2000);
}

TEST_CASE("batch indices are a pure function of seed and iteration") {
  const auto a = batch_indices(5, 7, 8, 30);
  CHECK(a == batch_indices(5, 7, 8, 30));
  CHECK(a != batch_indices(5, 8, 8, 30));
  CHECK(a != batch_indices(6, 7, 8, 30));
  CHECK(a.size() == 8);
  // Every epoch visits each index once.
  std::vector<int> seen(30, 0);
  for (int it = 0; it < 15; ++it) {
    for (auto i : batch_indices(1, it, 2, 30)) ++seen[i];
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

TEST_CASE("decoupled weight decay shrinks parameters without gradient") {
  TrainConfig c = tiny_config();
  c.learning_rate = 0.1;
  c.weight_decay = 0.5;
  ParameterSet p;
  p.add("graph.w", Matrix::Constant(1, 2, 2.0));
  p.add("attention.bias", Matrix::Constant(1, 2, 2.0));
  ParameterSet g = p.zeros_like();
  ParameterSet m = p.zeros_like();
  ParameterSet v = p.zeros_like();
  adamw_step(p, g, m, v, 1, c);
  CHECK(p.at("graph.w")(0, 0) == doctest::Approx(2.0 * (1.0 - 0.05)).epsilon(1e-15));
  CHECK(p.at("attention.bias")(0, 0) == 2.0);

  // First Adam step moves by lr * sign(g) once bias correction is applied.
  ParameterSet q;
  q.add("graph.w", Matrix::Zero(1, 2));
  ParameterSet gq;
  gq.add("graph.w", (Matrix(1, 2) << 3.0, -0.01).finished());
  ParameterSet mq = q.zeros_like(), vq = q.zeros_like();
  adamw_step(q, gq, mq, vq, 1, c);
  CHECK(q.at("graph.w")(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(q.at("graph.w")(0, 1) == doctest::Approx(0.1).epsilon(1e-4));
}

TEST_CASE("training fits a tiny set") {
  TrainConfig c = tiny_config();
  c.iterations = 60;
  const std::vector<Episode> few(tiny_data().begin(), tiny_data().begin() + 4);
  c.batch_size = 4;
  const TrainResult r = train(c, few);
  REQUIRE(r.losses.size() >= 2);
  CHECK(r.losses.back().total < 0.5 * r.losses.front().total);
  CHECK(r.losses.back().iteration == 60);
  CHECK(r.checkpoint.iteration == 60);
}

TEST_CASE("resuming matches an uninterrupted run bit for bit") {
  const TrainConfig c = tiny_config();
  const TrainResult full = train(c, tiny_data());
  TrainConfig half = c;
  half.iterations = 5;
  const TrainResult first = train(half, tiny_data());
  const Checkpoint reloaded = deserialize_checkpoint(serialize_checkpoint(first.checkpoint));
  const TrainResult second = train(c, tiny_data(), reloaded);
  CHECK(second.checkpoint.iteration == 12);
  CHECK(second.checkpoint.params == full.checkpoint.params);
  CHECK(second.checkpoint.adam_v == full.checkpoint.adam_v);
  CHECK(second.losses.front().iteration > 5);
}

TEST_CASE("training rejects mismatched data") {
  TrainConfig c = tiny_config();
  c.model.d = 8;
  CHECK_THROWS_AS(train(c, tiny_data()), InvalidInput);
  CHECK_THROWS_AS(train(tiny_config(), {}), InvalidInput);
}

TEST_CASE("a runaway learning rate raises a divergence error with the batch") {
  TrainConfig c = tiny_config();
  c.learning_rate = 1e300;
  c.weight_decay = 0.0;
  try {
    train(c, tiny_data());
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("on episodes") != std::string::npos);
  }
}

TEST_CASE("checkpoint archive round trip and damage detection") {
  TrainConfig c = tiny_config();
  c.iterations = 3;
  const Checkpoint ckpt = train(c, tiny_data()).checkpoint;
  const std::string bytes = serialize_checkpoint(ckpt);
  CHECK(deserialize_checkpoint(bytes) == ckpt);
  CHECK(serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes);

  CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), doctest::Contains("checksum"),
                       CorruptArchive);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x20;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), CorruptArchive);
  CHECK_THROWS_WITH_AS(deserialize_checkpoint("hello world, not an archive"), doctest::Contains("not a checkpoint"),
                       CorruptArchive);
  std::string version = bytes;
  version[8] = 9;
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(version), doctest::Contains("version"), CorruptArchive);

  ModelConfig wider = c.model;
  wider.hidden = 7;
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes, &wider), doctest::Contains("tensor 'action."), ShapeError);
}

TEST_CASE("fresh parameters follow the architecture") {
  ModelConfig m = tiny_config().model;
  const ParameterSet p = init_model_params(m, 1);
  CHECK_NOTHROW(check_shapes(p, m));
  CHECK(p == init_model_params(m, 1));
  CHECK_FALSE(p == init_model_params(m, 2));
  CHECK(p.at("response.hidden.weight").rows() == m.d + m.hidden);
  m.use_action_branch = false;
  const ParameterSet q = init_model_params(m, 1);
  CHECK_FALSE(q.contains("action.enc.wx"));
  CHECK(q.at("response.hidden.weight").rows() == m.d);
  CHECK_THROWS_AS(check_shapes(p, m), ShapeError);
}

TEST_CASE("loss CSV") {
  std::ostringstream os;
  write_loss_csv(os, {{10, 0.5, 0.25, 0.75}});
  CHECK(os.str() == "iteration,response_loss,action_loss,total\n10,0.50000000,0.25000000,0.75000000\n");
}

TEST_CASE("evaluation covers scored Alter episodes") {
  TrainConfig c = tiny_config();
  c.iterations = 2;
  const Checkpoint ckpt = train(c, tiny_data()).checkpoint;
  const EvalReport r = evaluate(ckpt, tiny_data(), 4);
  std::size_t alter = 0;
  for (const auto& e : tiny_data()) alter += e.response == DriverResponse::kAlter;
  CHECK(r.episodes == tiny_data().size());
  CHECK(r.scored == alter);
  CHECK(r.interventions.size() == alter);
  CHECK(r.id_accuracy >= 0.0);
  CHECK(r.id_accuracy <= 1.0);
  CHECK(r.response_ap[0].has_value());
  const EvalReport again = evaluate(ckpt, tiny_data(), 4);
  CHECK(again.model.average.macc == r.model.average.macc);
  CHECK(again.random_id_accuracy == r.random_id_accuracy);
}
