// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svtnet/asvt.hpp"
#include "svtnet/csvt.hpp"
#include "svtnet/layers.hpp"

namespace svtnet {

enum class Variant : std::uint8_t { kSvt = 0, kAsvtOnly = 1, kCsvtOnly = 2 };
enum class Fusion : std::uint8_t { kAdd = 0, kConcat = 1, kConcatConv = 2 };

std::string to_string(Variant v);
std::string to_string(Fusion f);
Variant parse_variant(const std::string& s);
Fusion parse_fusion(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::kSvt;
  int descriptor_dim = 256;
  int tokens = 8;
  int reduction = 8;
  double quant_step = 0.01;
  Fusion fusion = Fusion::kAdd;
  SoftmaxAxis token_axis = SoftmaxAxis::kToken;
  int stem_channels = 32;
  int mid_channels = 64;

  void validate() const;
  /// Width of the pooled descriptor (2d for plain concatenation).
  int output_dim() const;
  bool has_asvt() const { return variant != Variant::kCsvtOnly; }
  bool has_csvt() const { return variant != Variant::kAsvtOnly; }
};

/// Layer layout of the network for a given config.
struct Architecture {
  SPConvParams conv0;
  NormParams norm0;
  SPConvParams convs0;
  NormParams norms0;
  ResBlockParams resblock0;
  SPConvParams convs1;
  NormParams norms1;
  ResBlockParams resblock1;
  SPConvParams conv1x1;
  std::optional<ASVTParams> asvt;
  std::optional<CSVTParams> csvt;
  std::optional<SPConvParams> fuse;
  GeMParams gem;

  static Architecture make(const ModelConfig& config);
};

/// Voxel coordinates and kernel maps for one cloud at every stem level.
struct VoxelPyramid {
  SparseVoxelGrid input;       // stride 1 occupancy
  KernelMap conv0_map;         // K5 s1
  KernelMap down0_map;         // K2 s2 -> stride 2
  KernelMap block0_map;        // K3 s1 at stride 2
  KernelMap down1_map;         // K2 s2 -> stride 4
  KernelMap block1_map;        // K3 s1 at stride 4

  const std::vector<Coord>& final_coords() const { return block1_map.out_coords; }
};

VoxelPyramid build_pyramid(std::span<const Point> cloud, double quant_step);

struct BlockCount {
  std::string block;
  std::string kernel;
  std::string stride;
  int in_channels = 0;
  int out_channels = 0;
  std::size_t params = 0;
};

struct ParamReport {
  std::vector<BlockCount> blocks;
  std::size_t total = 0;
};

/// Optional capture of intermediate features for diagnostics.
struct ForwardTrace {
  AsvtTrace asvt;
  CsvtTrace csvt;
  std::vector<Matrix> stem;      // per-cloud conv1x1 output
  std::vector<Matrix> fused;     // per-cloud pre-pool features
};

struct ForwardResult {
  NodeId descriptors = 0;  // B x output_dim
  NodeId stem = 0;         // stacked conv1x1 output
  NodeId fused = 0;        // stacked pre-pool features
  std::vector<std::size_t> offsets;
};

struct SvtNet {
  ModelConfig config;
  Architecture arch;
  ParamSet params;

  static SvtNet build(const ModelConfig& config, std::uint64_t seed);

  /// Stacks the clouds into one graph; batch-norm statistics in train mode span
  /// every voxel of the batch, attention and pooling stay per cloud.
  ForwardResult forward(Graph& g, std::span<const VoxelPyramid* const> clouds,
                        ForwardTrace* trace = nullptr) const;

  /// Eval-mode descriptor of one cloud.
  Vector embed(std::span<const Point> cloud) const;
  Vector embed(const VoxelPyramid& pyramid, ForwardTrace* trace = nullptr) const;
  /// Eval-mode descriptors of many clouds; rows follow input order.
  Matrix embed_all(std::span<const std::vector<Point>> clouds, int workers = 1) const;

  ParamReport count_params() const;

  void save(const std::filesystem::path& path) const;
  static SvtNet load(const std::filesystem::path& path);
  /// Loads and checks that the checkpoint's variant matches `expected`.
  static SvtNet load(const std::filesystem::path& path, Variant expected);
};

}  // namespace svtnet
