// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/params.hpp"

#include <stdexcept>

namespace svtnet {

void ParamSet::add_param(const std::string& name, Matrix value) {
  if (!params_.emplace(name, std::move(value)).second)
    throw std::invalid_argument("duplicate parameter " + name);
}

void ParamSet::add_buffer(const std::string& name, Matrix value) {
  if (!buffers_.emplace(name, std::move(value)).second)
    throw std::invalid_argument("duplicate buffer " + name);
}

const Matrix& ParamSet::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

Matrix& ParamSet::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

const Matrix& ParamSet::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw std::out_of_range("unknown buffer " + name);
  return it->second;
}

Matrix& ParamSet::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw std::out_of_range("unknown buffer " + name);
  return it->second;
}

std::size_t ParamSet::count(const std::string& prefix) const {
  std::size_t total = 0;
  for (const auto& [name, value] : params_) {
    if (prefix.empty() || (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0 &&
                           name[prefix.size()] == '.')) {
      total += static_cast<std::size_t>(value.size());
    }
  }
  return total;
}

Vector ParamSet::flatten() const {
  Vector theta(static_cast<Eigen::Index>(count()));
  Eigen::Index at = 0;
  for (const auto& [name, value] : params_) {
    theta.segment(at, value.size()) = value.reshaped<Eigen::RowMajor>();
    at += value.size();
  }
  return theta;
}

void ParamSet::unflatten(const Vector& theta) {
  if (theta.size() != static_cast<Eigen::Index>(count()))
    throw std::invalid_argument("unflatten: size mismatch");
  Eigen::Index at = 0;
  for (auto& [name, value] : params_) {
    value.reshaped<Eigen::RowMajor>() = theta.segment(at, value.size());
    at += value.size();
  }
}

NodeId Graph::param(const std::string& name) {
  if (auto it = bindings_.find(name); it != bindings_.end()) return it->second;
  const NodeId id = tape_.leaf(params_.param(name), true);
  bindings_.emplace(name, id);
  return id;
}

std::map<std::string, Matrix> Graph::param_grads(const Gradients& grads) const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, id] : bindings_) out.emplace(name, grads[id]);
  return out;
}

void update_running_stats(ParamSet& params, const std::map<std::string, BatchStats>& stats,
                          double momentum) {
  for (const auto& [name, s] : stats) {
    Matrix& mean = params.buffer(name + ".running_mean");
    Matrix& var = params.buffer(name + ".running_var");
    const double n = static_cast<double>(s.rows);
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    mean = (1.0 - momentum) * mean + momentum * s.mean;
    var = (1.0 - momentum) * var + momentum * unbias * s.variance;
  }
}

}  // namespace svtnet
