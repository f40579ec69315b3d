// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <Eigen/Core>

namespace svtnet {

// Row-major so that voxel rows are contiguous for gather/scatter.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Coord = std::array<std::int32_t, 3>;

enum class Mode { kTrain, kEval };

// Derives an independent 64-bit seed for a named sub-stream.
std::uint64_t sub_seed(std::uint64_t seed, const std::string& stream);
std::uint64_t sub_seed(std::uint64_t seed, const std::string& stream, std::uint64_t key);

}  // namespace svtnet
