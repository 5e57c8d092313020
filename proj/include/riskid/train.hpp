#pragma once

// Joint optimisation of the response and action objectives, the checkpoint
// archive, and held-out evaluation.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "riskid/core_types.hpp"
#include "riskid/intervene.hpp"
#include "riskid/kv_config.hpp"
#include "riskid/metrics.hpp"
#include "riskid/model_config.hpp"
#include "riskid/params.hpp"

namespace riskid {

struct TrainConfig {
  int iterations = 20000;
  int batch_size = 16;
  double learning_rate = 0.0005;
  double weight_decay = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int z = 3;
  int n_agents = 25;  // upper bound on frame slots
  std::uint64_t seed = 0;
  double response_weight = 1.0;
  double action_weight = 1.0;
  int eval_every = 100;
  ModelConfig model;

  // Shorter schedule for desk runs; everything else keeps the defaults.
  static TrainConfig desk();

  void validate() const;
  // Keys: train.* and model.*.
  static TrainConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
};

struct Checkpoint {
  TrainConfig config;
  std::int64_t iteration = 0;
  ParameterSet params;
  // Adam moments; empty before the first update.
  ParameterSet adam_m;
  ParameterSet adam_v;

  bool operator==(const Checkpoint& other) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Checkpoint initial_checkpoint(const TrainConfig& config);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws CorruptArchive for damaged or foreign files and version mismatches.
// With `expected`, every tensor shape is checked against that architecture and
// a mismatch raises ShapeError naming the tensor.
Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr);
Checkpoint deserialize_checkpoint(const std::string& bytes, const ModelConfig* expected = nullptr);

// Same names and shapes as init_model_params(cfg) would produce.
void check_shapes(const ParameterSet& params, const ModelConfig& cfg);

struct LossRecord {
  std::int64_t iteration = 0;
  double response = 0.0;
  double action = 0.0;
  double total = 0.0;
};

void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& records);

// Train-set positions used by `iteration`; a pure function of (seed, iteration).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::int64_t iteration, int batch_size,
                                       std::size_t dataset_size);

// Batch-mean objective and its gradient.
LossBreakdown batch_objective(const std::vector<const Episode*>& batch, const ParameterSet& params,
                              const TrainConfig& config, ParameterSet* grads);

// One AdamW step (decoupled decay) at 1-based step `t`.
void adamw_step(ParameterSet& params, const ParameterSet& grads, ParameterSet& m, ParameterSet& v, std::int64_t t,
                const TrainConfig& config);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> losses;
};

using ProgressFn = std::function<void(const LossRecord&)>;

// Runs until checkpoint.iteration == config.iterations, starting from `resume`
// when given. Throws DivergenceError on a non-finite loss.
TrainResult train(const TrainConfig& config, const std::vector<Episode>& episodes,
                  const std::optional<Checkpoint>& resume = std::nullopt, const ProgressFn& progress = {});

struct EvalReport {
  std::size_t episodes = 0;
  std::size_t scored = 0;  // Alter episodes with a causal agent
  double id_accuracy = 0.0;
  double random_id_accuracy = 0.0;
  metrics::MaccScores model;
  metrics::MaccScores random;
  std::array<std::optional<double>, 3> action_ap;
  std::array<std::optional<double>, 2> response_ap;
  std::vector<InterventionResult> interventions;
  std::vector<int> scored_episode_index;
};

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Episode>& episodes, std::uint64_t baseline_seed);

}  // namespace riskid
