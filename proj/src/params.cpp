#include "riskid/params.hpp"

#include <cmath>

#include "riskid/errors.hpp"

namespace riskid {

Matrix& ParameterSet::add(const std::string& name, Matrix value) {
  auto [it, inserted] = tensors_.insert_or_assign(name, std::move(value));
  (void)inserted;
  return it->second;
}

Matrix& ParameterSet::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InvalidInput("unknown parameter '" + name + "'");
  return it->second;
}

const Matrix& ParameterSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InvalidInput("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors_) n += static_cast<std::size_t>(m.size());
  return n;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& [name, m] : tensors_) out.add(name, Matrix::Zero(m.rows(), m.cols()));
  return out;
}

void ParameterSet::set_zero() {
  for (auto& [name, m] : tensors_) m.setZero();
}

void ParameterSet::add_scaled(const ParameterSet& other, double factor) {
  for (auto& [name, m] : tensors_) m += factor * other.at(name);
}

bool ParameterSet::all_finite() const {
  for (const auto& [name, m] : tensors_) {
    if (!m.allFinite()) return false;
  }
  return true;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (const auto& [name, m] : tensors_) {
    auto it = other.tensors_.find(name);
    if (it == other.tensors_.end()) return false;
    if (m.rows() != it->second.rows() || m.cols() != it->second.cols()) return false;
    if (m != it->second) return false;
  }
  return true;
}

Matrix init_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Fill column-major explicitly so the draw order is part of the contract.
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  }
  return m;
}

ad::Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Matrix& value = params_.at(name);
  Matrix* sink = grads_ ? &grads_->at(name) : nullptr;
  ad::Var v = tape_.variable(value, sink);
  bound_.emplace(name, v);
  return v;
}

}  // namespace riskid
