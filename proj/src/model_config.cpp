#include "riskid/model_config.hpp"

#include <random>
#include <string>

#include "riskid/actionnet.hpp"
#include "riskid/attention.hpp"
#include "riskid/errors.hpp"
#include "riskid/graphnet.hpp"
#include "riskid/intervene.hpp"

namespace riskid {
namespace {

void require_positive(int value, const char* name) {
  if (value < 1) throw ConfigError(std::string("model.") + name + " must be >= 1, got " + std::to_string(value));
}

}  // namespace

void ModelConfig::validate() const {
  require_positive(d, "d");
  require_positive(hidden, "hidden");
  require_positive(gcn_layers, "gcn_layers");
  require_positive(feedback_dim, "feedback_dim");
  require_positive(p_e, "p_e");
  require_positive(p_d, "p_d");
  require_positive(face_dim, "face_dim");
  if (response_hidden < 0) throw ConfigError("model.response_hidden must be >= 0");
}

void ModelConfig::read(const KeyValueConfig& kv) {
  d = static_cast<int>(kv.get_int("model.d", d));
  hidden = static_cast<int>(kv.get_int("model.hidden", hidden));
  gcn_layers = static_cast<int>(kv.get_int("model.gcn_layers", gcn_layers));
  response_hidden = static_cast<int>(kv.get_int("model.response_hidden", response_hidden));
  feedback_dim = static_cast<int>(kv.get_int("model.feedback_dim", feedback_dim));
  p_e = static_cast<int>(kv.get_int("model.p_e", p_e));
  p_d = static_cast<int>(kv.get_int("model.p_d", p_d));
  use_action_branch = kv.get_bool("model.use_action_branch", use_action_branch);
  face_dim = static_cast<int>(kv.get_int("model.face_dim", face_dim));
  validate();
}

void ModelConfig::write(KeyValueConfig& kv) const {
  kv.set("model.d", std::to_string(d));
  kv.set("model.hidden", std::to_string(hidden));
  kv.set("model.gcn_layers", std::to_string(gcn_layers));
  kv.set("model.response_hidden", std::to_string(response_hidden));
  kv.set("model.feedback_dim", std::to_string(feedback_dim));
  kv.set("model.p_e", std::to_string(p_e));
  kv.set("model.p_d", std::to_string(p_d));
  kv.set("model.use_action_branch", use_action_branch ? "true" : "false");
  kv.set("model.face_dim", std::to_string(face_dim));
}

ParameterSet init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParameterSet params;
  graph::init_params(params, cfg, rng);
  if (cfg.use_action_branch) action::init_params(params, cfg, rng);
  init_response_params(params, cfg, rng);
  attention::init_params(params, cfg, rng);
  return params;
}

}  // namespace riskid
