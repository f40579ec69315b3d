// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "svtnet/common.hpp"

namespace svtnet {

using NodeId = std::size_t;

enum class OpKind {
  kLeaf,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kScale,
  kRowSoftmax,
  kRelu,
  kClampMin,
  kPower,
  kGatherRows,
  kScatterAddRows,
  kReduceMeanRows,
  kBatchNorm,
  kSliceRows,
  kConcatRows,
  kConcatCols,
  kSum,
};

std::string_view op_name(OpKind kind);

/// Batch-norm statistics produced by a train-mode forward.
struct BatchStats {
  Matrix mean;      // 1 x C
  Matrix variance;  // 1 x C, biased
  std::size_t rows = 0;
};

class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Matrix> grads) : grads_(std::move(grads)) {}

  /// Gradient of the loss w.r.t. a leaf; empty matrix if the leaf does not
  /// require gradients.
  const Matrix& operator[](NodeId id) const { return grads_.at(id); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Matrix> grads_;
};

/// Append-only reverse-mode tape over dense row-major matrices.
///
/// Every op computes its value eagerly. Nodes are stored in creation order, so
/// inputs always precede their consumers and `backward` is a single reverse
/// sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  NodeId leaf(Matrix value, bool requires_grad = true);
  NodeId constant(Matrix value) { return leaf(std::move(value), false); }

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  // `b` may be 1 x cols(a), in which case it is broadcast over rows.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId row_softmax(NodeId a);
  NodeId relu(NodeId a);
  NodeId clamp_min(NodeId a, double threshold);
  // Elementwise a^p with p a 1 x 1 node.
  NodeId power(NodeId a, NodeId p);
  NodeId gather_rows(NodeId a, std::vector<std::int32_t> index);
  NodeId scatter_add_rows(NodeId a, std::vector<std::int32_t> index, std::size_t out_rows);
  NodeId reduce_mean_rows(NodeId a);
  NodeId slice_rows(NodeId a, std::size_t begin, std::size_t end);
  NodeId concat_rows(std::span<const NodeId> parts);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId sum(NodeId a);

  /// Per-column normalization followed by gamma * xhat + beta.
  /// Train mode normalizes with the biased batch variance and reports the
  /// batch statistics through `stats`; eval mode uses the running statistics.
  NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, Mode mode, const Matrix& running_mean,
                    const Matrix& running_var, double eps, BatchStats* stats = nullptr);

  const Matrix& value(NodeId id) const { return nodes_.at(id).value; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
  Gradients backward(NodeId loss) const;

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::array<NodeId, 3> inputs{};
    std::uint8_t num_inputs = 0;
    bool requires_grad = false;
    Matrix value;
    Matrix saved;   // op-specific forward state
    Matrix saved2;
    std::vector<std::int32_t> index;
    std::vector<NodeId> parts;
    double scalar = 0.0;
    std::size_t extent = 0;
  };

  NodeId push(Node node);
  bool needs_grad(std::initializer_list<NodeId> ids) const;

  std::vector<Node> nodes_;
};

/// Objective for finite-difference checking. When `grad` is non-null it must be
/// filled with the analytic gradient at `theta`.
using Objective = std::function<double(const Vector& theta, Vector* grad)>;

/// Max over components of |analytic - central difference| / max(1, |analytic|, |numeric|).
double grad_check(const Objective& f, const Vector& theta, double eps);

}  // namespace svtnet
