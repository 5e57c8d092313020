#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "riskid/autodiff.hpp"
#include "riskid/core_types.hpp"

namespace riskid {

// Named parameter tensors. Iteration order (sorted by name) is the canonical
// order for optimizer updates, gradient reduction and serialization.
class ParameterSet {
 public:
  Matrix& add(const std::string& name, Matrix value);
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  // Same names and shapes, all zeros.
  ParameterSet zeros_like() const;
  void set_zero();
  // this += other, in name order.
  void add_scaled(const ParameterSet& other, double factor);
  bool all_finite() const;
  bool operator==(const ParameterSet& other) const;

 private:
  std::map<std::string, Matrix> tensors_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) draws, seeded.
Matrix init_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

// Binds parameters onto a tape, routing gradients into an optional sink set.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, const ParameterSet& params, ParameterSet* grads)
      : tape_(tape), params_(params), grads_(grads) {}

  // Each name is bound once per binder; later calls return the same Var.
  ad::Var operator()(const std::string& name);
  ad::Tape& tape() { return tape_; }
  const ParameterSet& params() const { return params_; }

 private:
  ad::Tape& tape_;
  const ParameterSet& params_;
  ParameterSet* grads_;
  std::map<std::string, ad::Var> bound_;
};

}  // namespace riskid
