#pragma once

#include <cstdint>
#include <string>

#include "riskid/kv_config.hpp"
#include "riskid/params.hpp"

namespace riskid {

// Architecture of the risk-object model. Dimension names follow the modules:
// node features are D wide, recurrent states H wide.
struct ModelConfig {
  int d = 128;
  int hidden = 64;
  int gcn_layers = 2;
  // Width of the response classifier's hidden layer; 0 gives an affine head.
  int response_hidden = 64;
  // Width of the decoder feedback f_d.
  int feedback_dim = 3;
  int p_e = 3;
  int p_d = 3;
  // Concatenate the action encoder state into the response classifier.
  bool use_action_branch = true;
  int face_dim = 2;

  void validate() const;
  void read(const KeyValueConfig& kv);
  void write(KeyValueConfig& kv) const;
  bool operator==(const ModelConfig&) const = default;
};

// Fresh parameters for every module, drawn in a fixed order from `seed`.
ParameterSet init_model_params(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace riskid
