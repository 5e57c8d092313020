#include "riskid/graphnet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "riskid/errors.hpp"

namespace riskid::graph {
namespace {

std::string layer_name(int l, const char* field) {
  return "graph.gcn" + std::to_string(l) + "." + field;
}

void check_layer_shapes(const ParameterSet& params, int layers, Eigen::Index d) {
  const Matrix& w = params.at("graph.w");
  const Matrix& wp = params.at("graph.w_prime");
  if (w.rows() != d || w.cols() != d || wp.rows() != d || wp.cols() != d) {
    throw ConfigError("relation projections must be " + std::to_string(d) + " x " + std::to_string(d));
  }
  for (int l = 0; l < layers; ++l) {
    const Matrix& lw = params.at(layer_name(l, "weight"));
    const Matrix& lb = params.at(layer_name(l, "bias"));
    if (lw.rows() != d || lw.cols() != d || lb.rows() != 1 || lb.cols() != d) {
      throw ConfigError("gcn layer " + std::to_string(l) + " does not match feature dimension " +
                        std::to_string(d));
    }
  }
}

}  // namespace

void init_params(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng) {
  params.add("graph.w", init_uniform(cfg.d, cfg.d, rng));
  params.add("graph.w_prime", init_uniform(cfg.d, cfg.d, rng));
  for (int l = 0; l < cfg.gcn_layers; ++l) {
    params.add(layer_name(l, "weight"), init_uniform(cfg.d, cfg.d, rng));
    params.add(layer_name(l, "bias"), Matrix::Zero(1, cfg.d));
  }
}

int gcn_depth(const ParameterSet& params) {
  int l = 0;
  while (params.contains(layer_name(l, "weight"))) ++l;
  return l;
}

double appearance_relation(const Vector& m_i, const Vector& m_j, const ParameterSet& params) {
  const Matrix& w = params.at("graph.w");
  const Matrix& wp = params.at("graph.w_prime");
  if (m_i.size() != w.cols() || m_j.size() != wp.cols()) {
    throw InvalidInput("appearance_relation: feature length does not match D");
  }
  if (!m_i.allFinite() || !m_j.allFinite()) {
    throw InvalidInput("appearance_relation: non-finite feature");
  }
  const Vector theta = w * m_i;
  const Vector phi = wp * m_j;
  return theta.dot(phi) / std::sqrt(static_cast<double>(m_i.size()));
}

int presence_gate(const AgentNode& i, const AgentNode& j) { return (i.present && j.present) ? 1 : 0; }

Eigen::VectorXd frame_presence(const Frame& frame) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(frame.nodes.size()));
  for (std::size_t s = 0; s < frame.nodes.size(); ++s) p[s] = frame.nodes[s].present ? 1.0 : 0.0;
  return p;
}

Matrix frame_features(const Frame& frame) {
  const Eigen::Index n = static_cast<Eigen::Index>(frame.nodes.size());
  const Eigen::Index d = n == 0 ? 0 : frame.nodes.front().feature.size();
  Matrix h(n, d);
  for (Eigen::Index s = 0; s < n; ++s) h.row(s) = frame.nodes[s].feature.transpose();
  return h;
}

Matrix presence_mask(const Eigen::VectorXd& presence) { return presence * presence.transpose(); }

ad::Var adjacency_var(ParamBinder& bind, ad::Var features, const Eigen::VectorXd& presence) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(features.cols()));
  ad::Var theta = ad::matmul_nt(features, bind("graph.w"));
  ad::Var phi = ad::matmul_nt(features, bind("graph.w_prime"));
  ad::Var logits = ad::scale(ad::matmul_nt(theta, phi), inv_sqrt_d);
  return ad::masked_row_softmax(logits, presence_mask(presence));
}

Matrix build_adjacency(const Frame& frame, const ParameterSet& params) {
  const Matrix h = frame_features(frame);
  if (!h.allFinite()) throw InvalidInput("build_adjacency: non-finite feature");
  check_layer_shapes(params, 0, h.cols());
  const Eigen::VectorXd presence = frame_presence(frame);
  ad::Tape tape;
  ParamBinder bind(tape, params, nullptr);
  Matrix a = adjacency_var(bind, tape.constant(h), presence).value();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (presence[i] != 0.0 && !(a.row(i).sum() > 0.0)) {
      throw std::logic_error("build_adjacency: present agent without present neighbours");
    }
  }
  return a;
}

ad::Var relational_feature(ParamBinder& bind, const std::vector<ad::Var>& features,
                           const std::vector<Eigen::VectorXd>& presence, GraphTrace* trace) {
  if (features.empty() || features.size() != presence.size()) {
    throw InvalidInput("relational_feature: need one presence vector per frame");
  }
  const int layers = gcn_depth(bind.params());
  check_layer_shapes(bind.params(), layers, features.front().cols());
  std::vector<ad::Var> pooled;
  pooled.reserve(features.size());
  for (std::size_t t = 0; t < features.size(); ++t) {
    ad::Var a = adjacency_var(bind, features[t], presence[t]);
    ad::Var h = features[t];
    for (int l = 0; l < layers; ++l) {
      ad::Var mixed = ad::matmul(ad::matmul(a, h), bind(layer_name(l, "weight")));
      h = ad::relu(ad::add_row(mixed, bind(layer_name(l, "bias"))));
    }
    if (trace) {
      trace->adjacency.push_back(a.value());
      trace->node_activations.push_back(h.value());
    }
    pooled.push_back(ad::weighted_row_mean(h, presence[t]));
  }
  return ad::mean(pooled);
}

Vector gcn_forward(const Episode& episode, const ParameterSet& params, GraphTrace* trace) {
  ad::Tape tape;
  ParamBinder bind(tape, params, nullptr);
  std::vector<ad::Var> feats;
  std::vector<Eigen::VectorXd> presence;
  for (const Frame& f : episode.frames) {
    feats.push_back(tape.constant(frame_features(f)));
    presence.push_back(frame_presence(f));
  }
  return relational_feature(bind, feats, presence, trace).value().row(0).transpose();
}

}  // namespace riskid::graph
