// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svtnet/model.hpp"

namespace svtnet {

/// Outcome of one central-difference comparison.
struct GradCheckResult {
  std::string name;
  std::string level;  // op | layer | model
  double error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return error < tolerance; }
};

/// Finite-difference step used by every suite below.
inline constexpr double kGradCheckEps = 1e-6;

/// Every tape primitive on small random inputs kept away from kinks.
std::vector<GradCheckResult> check_op_grads(std::uint64_t seed);

/// Every layer (convolutions, norms, residual blocks, pooling, both
/// transformers) w.r.t. its parameters and inputs. Norm layers are checked in
/// eval and train mode.
std::vector<GradCheckResult> check_layer_grads(std::uint64_t seed);

/// Norm of the descriptors of a narrow model (d = 16, L_t = 2, r = 4) on two
/// clouds of at most 10 voxels, w.r.t. all parameters.
GradCheckResult check_model_grads(std::uint64_t seed, Variant variant, Mode mode = Mode::kEval);

}  // namespace svtnet
