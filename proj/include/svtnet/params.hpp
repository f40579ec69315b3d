// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>

#include "svtnet/autodiff.hpp"
#include "svtnet/common.hpp"

namespace svtnet {

/// Named trainable tensors plus non-trainable buffers (batch-norm running
/// statistics). Names are dotted paths such as "resblock1.conv1.weight".
class ParamSet {
 public:
  void add_param(const std::string& name, Matrix value);
  void add_buffer(const std::string& name, Matrix value);

  bool has_param(const std::string& name) const { return params_.count(name) != 0; }
  const Matrix& param(const std::string& name) const;
  Matrix& param(const std::string& name);
  const Matrix& buffer(const std::string& name) const;
  Matrix& buffer(const std::string& name);

  const std::map<std::string, Matrix>& params() const { return params_; }
  std::map<std::string, Matrix>& params() { return params_; }
  const std::map<std::string, Matrix>& buffers() const { return buffers_; }
  std::map<std::string, Matrix>& buffers() { return buffers_; }

  /// Number of trainable scalars whose name starts with `prefix` followed by
  /// '.' (or all of them for an empty prefix).
  std::size_t count(const std::string& prefix = "") const;

  /// Flattens all trainable values in name order.
  Vector flatten() const;
  void unflatten(const Vector& theta);

 private:
  std::map<std::string, Matrix> params_;
  std::map<std::string, Matrix> buffers_;
};

/// One forward pass: a tape, read-only parameters bound lazily as leaves, and
/// the train-mode batch statistics it produced.
class Graph {
 public:
  Graph(Tape& tape, const ParamSet& params, Mode mode) : tape_(tape), params_(params), mode_(mode) {}

  Tape& tape() { return tape_; }
  const ParamSet& params() const { return params_; }
  Mode mode() const { return mode_; }

  NodeId param(const std::string& name);
  const std::map<std::string, NodeId>& bindings() const { return bindings_; }

  /// Gradients of every bound parameter, keyed by name.
  std::map<std::string, Matrix> param_grads(const Gradients& grads) const;

  std::map<std::string, BatchStats>& batch_stats() { return stats_; }

 private:
  Tape& tape_;
  const ParamSet& params_;
  Mode mode_;
  std::map<std::string, NodeId> bindings_;
  std::map<std::string, BatchStats> stats_;
};

/// Folds train-mode statistics into the running buffers with the given momentum
/// (running = (1 - m) * running + m * batch, unbiased variance).
void update_running_stats(ParamSet& params, const std::map<std::string, BatchStats>& stats,
                          double momentum);

}  // namespace svtnet
