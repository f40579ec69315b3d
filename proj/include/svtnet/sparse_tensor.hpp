// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "svtnet/common.hpp"

namespace svtnet {

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

using PointCloud = std::vector<Point>;

/// Occupied voxels of a quantized cloud.
///
/// `coords` is strictly lexicographically sorted and unique; `features` has one
/// row per coordinate. Coordinates stay in the base lattice after striding, so a
/// grid with stride 4 only holds multiples of 4.
struct SparseVoxelGrid {
  std::vector<Coord> coords;
  Matrix features;
  int stride = 1;
  double quant_step = 0.0;

  std::size_t size() const { return coords.size(); }
};

/// Per-offset (input row, output row) pairs realizing one sparse convolution.
///
/// Offsets are enumerated with x outermost, z innermost. `offsets` are in
/// kernel units; the lattice displacement of offset `k` is `offsets[k] * in_stride`.
struct KernelMap {
  struct Pair {
    std::int32_t in = 0;
    std::int32_t out = 0;
    bool operator==(const Pair&) const = default;
  };

  int kernel_size = 1;
  int stride = 1;
  int in_stride = 1;
  std::size_t num_in = 0;
  std::vector<Coord> offsets;
  std::vector<std::vector<Pair>> pairs;
  std::vector<Coord> out_coords;

  std::size_t num_out() const { return out_coords.size(); }
  std::size_t total_pairs() const;
  // True when the map is 1x1x1 with out row i fed only by in row i.
  bool is_identity() const;
};

/// Quantizes `pc` with floor(p / step) and returns the sorted occupancy grid
/// (all-ones N x 1 features).
SparseVoxelGrid voxelize(std::span<const Point> pc, double step);

/// Returns sorted unique s * floor(c / s) over `coords`.
std::vector<Coord> downsample_coords(std::span<const Coord> coords, int s);

/// Kernel offsets for size `k`: centered for odd k, {0..k-1}^3 for even k.
std::vector<Coord> kernel_offsets(int k);

KernelMap build_kernel_map(std::span<const Coord> in_coords, int in_stride, int kernel_size,
                           int stride);
KernelMap build_kernel_map(const SparseVoxelGrid& in_grid, int kernel_size, int stride);

/// Concatenates per-cloud maps into one map over stacked rows. `out_coords`
/// is the concatenation (sorted per segment only).
KernelMap merge_kernel_maps(std::span<const KernelMap> maps);

std::vector<Coord> sorted_unique(std::vector<Coord> coords);

}  // namespace svtnet
