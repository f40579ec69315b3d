// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/sparse_tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace svtnet {
namespace {

struct CoordHash {
  std::size_t operator()(const Coord& c) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(c[0]);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(c[1]);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(c[2]);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

using CoordIndex = std::unordered_map<Coord, std::int32_t, CoordHash>;

std::int32_t floor_div(std::int32_t a, std::int32_t b) {
  std::int32_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

std::size_t KernelMap::total_pairs() const {
  std::size_t total = 0;
  for (const auto& p : pairs) total += p.size();
  return total;
}

bool KernelMap::is_identity() const {
  if (pairs.size() != 1 || pairs[0].size() != num_in || num_in != num_out()) return false;
  for (std::size_t i = 0; i < pairs[0].size(); ++i) {
    const auto& p = pairs[0][i];
    if (p.in != static_cast<std::int32_t>(i) || p.out != static_cast<std::int32_t>(i)) return false;
  }
  return true;
}

std::vector<Coord> sorted_unique(std::vector<Coord> coords) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  return coords;
}

SparseVoxelGrid voxelize(std::span<const Point> pc, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw std::invalid_argument("voxelize: step must be > 0");
  if (pc.empty()) throw std::invalid_argument("empty point cloud");

  constexpr double kLimit = static_cast<double>(std::numeric_limits<std::int32_t>::max());
  std::vector<Coord> coords;
  coords.reserve(pc.size());
  for (const Point& p : pc) {
    Coord c{};
    const double v[3] = {p.x, p.y, p.z};
    for (int a = 0; a < 3; ++a) {
      if (!std::isfinite(v[a])) throw std::invalid_argument("invalid coordinate");
      const double q = std::floor(v[a] / step);
      if (!(std::abs(q) < kLimit)) throw std::invalid_argument("invalid coordinate");
      c[a] = static_cast<std::int32_t>(q);
    }
    coords.push_back(c);
  }

  SparseVoxelGrid grid;
  grid.coords = sorted_unique(std::move(coords));
  grid.features = Matrix::Ones(static_cast<Eigen::Index>(grid.coords.size()), 1);
  grid.stride = 1;
  grid.quant_step = step;
  return grid;
}

std::vector<Coord> downsample_coords(std::span<const Coord> coords, int s) {
  if (s < 1) throw std::invalid_argument("downsample_coords: stride must be >= 1");
  std::vector<Coord> out;
  out.reserve(coords.size());
  for (const Coord& c : coords) {
    out.push_back({s * floor_div(c[0], s), s * floor_div(c[1], s), s * floor_div(c[2], s)});
  }
  return sorted_unique(std::move(out));
}

std::vector<Coord> kernel_offsets(int k) {
  if (k < 1) throw std::invalid_argument("kernel size must be >= 1");
  const int lo = (k % 2 == 1) ? -(k - 1) / 2 : 0;
  std::vector<Coord> offsets;
  offsets.reserve(static_cast<std::size_t>(k) * k * k);
  for (int x = lo; x < lo + k; ++x)
    for (int y = lo; y < lo + k; ++y)
      for (int z = lo; z < lo + k; ++z) offsets.push_back({x, y, z});
  return offsets;
}

KernelMap build_kernel_map(std::span<const Coord> in_coords, int in_stride, int kernel_size,
                           int stride) {
  if (kernel_size < 1 || stride < 1 || in_stride < 1)
    throw std::invalid_argument("build_kernel_map: kernel size and strides must be >= 1");

  KernelMap km;
  km.kernel_size = kernel_size;
  km.stride = stride;
  km.in_stride = in_stride;
  km.num_in = in_coords.size();
  km.offsets = kernel_offsets(kernel_size);
  km.out_coords = stride == 1 ? std::vector<Coord>(in_coords.begin(), in_coords.end())
                              : downsample_coords(in_coords, in_stride * stride);
  km.pairs.resize(km.offsets.size());

  CoordIndex index;
  index.reserve(in_coords.size() * 2);
  for (std::size_t i = 0; i < in_coords.size(); ++i) index.emplace(in_coords[i], static_cast<std::int32_t>(i));

  for (std::size_t k = 0; k < km.offsets.size(); ++k) {
    const Coord& d = km.offsets[k];
    auto& pairs = km.pairs[k];
    for (std::size_t o = 0; o < km.out_coords.size(); ++o) {
      const Coord& oc = km.out_coords[o];
      const Coord ic{oc[0] + d[0] * in_stride, oc[1] + d[1] * in_stride, oc[2] + d[2] * in_stride};
      if (auto it = index.find(ic); it != index.end()) {
        pairs.push_back({it->second, static_cast<std::int32_t>(o)});
      }
    }
  }
  return km;
}

KernelMap build_kernel_map(const SparseVoxelGrid& in_grid, int kernel_size, int stride) {
  return build_kernel_map(in_grid.coords, in_grid.stride, kernel_size, stride);
}

KernelMap merge_kernel_maps(std::span<const KernelMap> maps) {
  if (maps.empty()) throw std::invalid_argument("merge_kernel_maps: no maps");
  KernelMap merged;
  merged.kernel_size = maps[0].kernel_size;
  merged.stride = maps[0].stride;
  merged.in_stride = maps[0].in_stride;
  merged.offsets = maps[0].offsets;
  merged.pairs.resize(merged.offsets.size());
  std::int32_t in_base = 0;
  std::int32_t out_base = 0;
  for (const KernelMap& m : maps) {
    if (m.kernel_size != merged.kernel_size || m.stride != merged.stride || m.in_stride != merged.in_stride)
      throw std::invalid_argument("merge_kernel_maps: incompatible maps");
    for (std::size_t k = 0; k < m.pairs.size(); ++k) {
      for (const auto& p : m.pairs[k]) merged.pairs[k].push_back({p.in + in_base, p.out + out_base});
    }
    merged.out_coords.insert(merged.out_coords.end(), m.out_coords.begin(), m.out_coords.end());
    in_base += static_cast<std::int32_t>(m.num_in);
    out_base += static_cast<std::int32_t>(m.num_out());
  }
  merged.num_in = static_cast<std::size_t>(in_base);
  return merged;
}

}  // namespace svtnet
