// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "svtnet/layers.hpp"

namespace svtnet {

/// Axis over which the grouping and re-projection maps are normalized.
/// kToken gives each voxel a distribution over tokens; kVoxel makes every
/// token a convex combination of voxels.
enum class SoftmaxAxis { kToken, kVoxel };

/// Cluster-based transformer: tokenizer, token transformer and projector.
struct CSVTParams {
  std::string name;
  int channels = 0;
  int tokens = 8;
  SoftmaxAxis axis = SoftmaxAxis::kToken;
  SPConvParams conv_group;       // C -> L_t
  SPConvParams conv_tokfeat;     // C -> C
  SPConvParams lin_q;            // token-wise C -> C
  SPConvParams lin_k;
  SPConvParams lin_v;
  SPConvParams lin_attn_out;
  SPConvParams lin_p;
  SPConvParams conv_proj_query;  // C -> C
  SPConvParams conv_out;         // C -> C

  static CSVTParams make(const std::string& name, int channels, int tokens = 8,
                         SoftmaxAxis axis = SoftmaxAxis::kToken);
  std::size_t param_count() const;
  void init(ParamSet& params, std::mt19937_64& rng) const;
};

struct TokenizeResult {
  NodeId tokens;    // L_t x C
  NodeId grouping;  // N x L_t
};

TokenizeResult tokenize(Graph& g, NodeId features, const CSVTParams& csvt);
NodeId token_transformer(Graph& g, NodeId tokens, const CSVTParams& csvt);
/// Returns x + conv_out(M_p * T_p); `reprojection` receives M_p when non-null.
NodeId project(Graph& g, NodeId features, NodeId attended_tokens, const CSVTParams& csvt,
               NodeId* reprojection = nullptr);

struct CsvtTrace {
  std::vector<Matrix> grouping;
  std::vector<Matrix> reprojection;
};

/// Full block evaluated independently per row segment.
NodeId csvt_forward(Graph& g, NodeId features, std::span<const std::size_t> offsets, const CSVTParams& csvt,
                    CsvtTrace* trace = nullptr);

SparseVoxelGrid csvt_forward(const SparseVoxelGrid& grid, const ParamSet& params, const CSVTParams& csvt);

}  // namespace svtnet
