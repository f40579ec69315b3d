// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "svtnet/layers.hpp"

namespace svtnet {

/// Atom-based transformer: every occupied voxel attends to every other voxel
/// of the same cloud.
struct ASVTParams {
  std::string name;
  int channels = 0;
  int reduction = 8;
  SPConvParams conv_v;
  SPConvParams conv_q;
  SPConvParams conv_k;
  SPConvParams conv_out;

  static ASVTParams make(const std::string& name, int channels, int reduction = 8);
  int reduced_channels() const { return channels / reduction; }
  std::size_t param_count() const;
  void init(ParamSet& params, std::mt19937_64& rng) const;
};

/// row_softmax(q * k^T).
NodeId attention_map(Tape& t, NodeId q, NodeId k);
Matrix attention_map(const Matrix& q, const Matrix& k);

/// Optional capture of per-cloud attention maps.
struct AsvtTrace {
  std::vector<Matrix> attention;
};

/// x + conv_out(S * conv_v(x)) evaluated independently per row segment.
NodeId asvt_forward(Graph& g, NodeId features, std::span<const std::size_t> offsets, const ASVTParams& asvt,
                    AsvtTrace* trace = nullptr);

SparseVoxelGrid asvt_forward(const SparseVoxelGrid& grid, const ParamSet& params, const ASVTParams& asvt);

}  // namespace svtnet
