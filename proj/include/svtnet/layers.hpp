// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "svtnet/params.hpp"
#include "svtnet/sparse_tensor.hpp"

namespace svtnet {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kNormMomentum = 0.1;
inline constexpr double kGemClamp = 1e-6;

/// Sparse convolution layer. The weight is stored as a (K^3 * C_in) x C_out
/// matrix; rows [k * C_in, (k + 1) * C_in) hold the map for kernel offset k.
struct SPConvParams {
  std::string name;
  int kernel_size = 1;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;
  bool bias = false;

  std::size_t param_count() const;
  void init(ParamSet& params, std::mt19937_64& rng) const;
  std::string weight_name() const { return name + ".weight"; }
  std::string bias_name() const { return name + ".bias"; }
};

struct NormParams {
  std::string name;
  int channels = 0;

  std::size_t param_count() const { return 2 * static_cast<std::size_t>(channels); }
  void init(ParamSet& params) const;
};

struct ResBlockParams {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  SPConvParams conv1;
  NormParams norm1;
  SPConvParams conv2;
  NormParams norm2;
  std::optional<SPConvParams> skip;
  std::optional<NormParams> skip_norm;

  static ResBlockParams make(const std::string& name, int in_channels, int out_channels);
  std::size_t param_count() const;
  void init(ParamSet& params, std::mt19937_64& rng) const;
};

struct GeMParams {
  std::string name;
  double init_p = 3.0;

  std::string p_name() const { return name + ".p"; }
  void init(ParamSet& params) const;
};

/// Gather, multiply by the per-offset weight, scatter-add; then bias.
NodeId sp_conv(Graph& g, NodeId features, const SPConvParams& conv, const KernelMap& km);

/// 1x1x1 stride-1 convolution, i.e. a shared linear map over voxel rows.
NodeId pointwise_conv(Graph& g, NodeId features, const SPConvParams& conv);

NodeId batch_norm(Graph& g, NodeId features, const NormParams& norm);
NodeId bn_relu(Graph& g, NodeId features, const NormParams& norm);

/// relu(bn2(conv2(relu(bn1(conv1(x))))) + skip(x)); `km` is the K=3 stride-1
/// map over the block's coordinates.
NodeId res_block(Graph& g, NodeId features, const ResBlockParams& block, const KernelMap& km);

/// ((1/N) sum_i max(x_i, 1e-6)^p)^(1/p) per column; returns 1 x C.
NodeId gem_pool(Graph& g, NodeId features, const GeMParams& gem);

/// GeM over each row segment [offsets[b], offsets[b+1]); returns B x C.
NodeId gem_pool_segments(Graph& g, NodeId features, std::span<const std::size_t> offsets,
                         const GeMParams& gem);

// Value-level conveniences that run an eval-mode tape.
SparseVoxelGrid sp_conv(const SparseVoxelGrid& grid, const ParamSet& params, const SPConvParams& conv,
                        const KernelMap& km);
SparseVoxelGrid bn_relu(const SparseVoxelGrid& grid, const ParamSet& params, const NormParams& norm,
                        Mode mode);
Vector gem_pool(const Matrix& features, double p);

}  // namespace svtnet
