#pragma once

// Interaction graph over tracked agents and the graph-convolution reasoning
// that condenses it into a relational feature g.
//
// Parameters (RelationParams):
//   graph.w, graph.w_prime      D x D relation projections, theta(m) = w m, phi(m) = w' m
//   graph.gcn<l>.weight / .bias D x D and 1 x D per layer
//
// Absent slots never contribute: they are excluded from the adjacency softmax,
// their adjacency rows and columns are zero, and node pooling skips them.

#include <random>
#include <vector>

#include "riskid/autodiff.hpp"
#include "riskid/core_types.hpp"
#include "riskid/model_config.hpp"
#include "riskid/params.hpp"

namespace riskid::graph {

void init_params(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng);

// (w m_i)^T (w' m_j) / sqrt(D)
double appearance_relation(const Vector& m_i, const Vector& m_j, const ParameterSet& params);

// 1 iff both nodes are present.
int presence_gate(const AgentNode& i, const AgentNode& j);

// N x N adjacency A_t for one frame.
Matrix build_adjacency(const Frame& frame, const ParameterSet& params);

struct GraphTrace {
  std::vector<Matrix> adjacency;         // per frame, N x N
  std::vector<Matrix> node_activations;  // per frame, N x D after the last layer
};

// Relational feature g (length D).
Vector gcn_forward(const Episode& episode, const ParameterSet& params, GraphTrace* trace = nullptr);

// Tape-level building blocks used for training and gradient checks.
Matrix presence_mask(const Eigen::VectorXd& presence);
Eigen::VectorXd frame_presence(const Frame& frame);
Matrix frame_features(const Frame& frame);
int gcn_depth(const ParameterSet& params);

ad::Var adjacency_var(ParamBinder& bind, ad::Var features, const Eigen::VectorXd& presence);

// g from per-frame N x D feature values and presence vectors.
ad::Var relational_feature(ParamBinder& bind, const std::vector<ad::Var>& features,
                           const std::vector<Eigen::VectorXd>& presence, GraphTrace* trace = nullptr);

}  // namespace riskid::graph
