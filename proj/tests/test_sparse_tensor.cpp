// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "svtnet/sparse_tensor.hpp"

using namespace svtnet;

namespace {

std::set<std::tuple<int, int, int>> pair_set(const KernelMap& km) {
  std::set<std::tuple<int, int, int>> s;
  for (std::size_t d = 0; d < km.pairs.size(); ++d)
    for (const auto& p : km.pairs[d]) s.insert({static_cast<int>(d), p.in, p.out});
  return s;
}

PointCloud random_cloud(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud pc(n);
  for (auto& p : pc) p = {u(rng), u(rng), u(rng)};
  return pc;
}

}  // namespace

TEST_CASE("voxelize floors coordinates and marks occupancy") {
  const PointCloud pc{{0.005, 0.005, 0.005}, {0.012, 0.0, 0.0}};
  const SparseVoxelGrid g = voxelize(pc, 0.01);
  REQUIRE(g.size() == 2);
  CHECK(g.coords[0] == Coord{0, 0, 0});
  CHECK(g.coords[1] == Coord{1, 0, 0});
  CHECK(g.features(0, 0) == 1.0);
  CHECK(g.features(1, 0) == 1.0);
  CHECK(g.stride == 1);
  CHECK(g.quant_step == 0.01);
}

TEST_CASE("voxelize merges duplicates into a single occupied voxel") {
  const SparseVoxelGrid g = voxelize(PointCloud{{0.001, 0.002, 0.003}, {0.004, 0.005, 0.006}}, 0.01);
  REQUIRE(g.size() == 1);
  CHECK(g.features(0, 0) == 1.0);
}

TEST_CASE("voxelize floors negative coordinates") {
  const SparseVoxelGrid g = voxelize(PointCloud{{-0.001, -0.01, -0.011}}, 0.01);
  CHECK(g.coords[0] == Coord{-1, -1, -2});
}

TEST_CASE("voxelize matches a hash-set oracle on random clouds") {
  std::mt19937_64 rng(7);
  const PointCloud pc = random_cloud(4096, rng);
  const SparseVoxelGrid g = voxelize(pc, 0.01);
  const auto expected = oracle::voxel_set(pc, 0.01);
  CHECK(g.size() <= 4096);
  REQUIRE(g.size() == expected.size());
  CHECK(std::equal(g.coords.begin(), g.coords.end(), expected.begin()));
  CHECK(g.features.rows() == static_cast<Eigen::Index>(g.size()));
  CHECK((g.features.array() == 1.0).all());
}

TEST_CASE("voxelize rejects empty and non-finite clouds") {
  CHECK_THROWS_WITH(voxelize(PointCloud{}, 0.01), "empty point cloud");
  CHECK_THROWS_WITH(voxelize(PointCloud{{0.0, std::nan(""), 0.0}}, 0.01), "invalid coordinate");
  CHECK_THROWS_WITH(voxelize(PointCloud{{0.0, 0.0, INFINITY}}, 0.01), "invalid coordinate");
}

TEST_CASE("voxelize is invariant to point order") {
  std::mt19937_64 rng(3);
  PointCloud pc = random_cloud(2000, rng);
  const SparseVoxelGrid a = voxelize(pc, 0.02);
  std::shuffle(pc.begin(), pc.end(), rng);
  const SparseVoxelGrid b = voxelize(pc, 0.02);
  CHECK(a.coords == b.coords);
  CHECK(a.features == b.features);
}

TEST_CASE("voxelizing voxel centers reproduces the grid") {
  std::mt19937_64 rng(5);
  const double step = 0.03;
  const SparseVoxelGrid g = voxelize(random_cloud(1000, rng), step);
  PointCloud centers;
  for (const Coord& c : g.coords) centers.push_back({(c[0] + 0.5) * step, (c[1] + 0.5) * step, (c[2] + 0.5) * step});
  CHECK(voxelize(centers, step).coords == g.coords);
}

TEST_CASE("downsample_coords floors to the coarser lattice") {
  const std::vector<Coord> in{{0, 0, 0}, {1, 0, 0}, {3, 2, 1}};
  CHECK(downsample_coords(in, 2) == std::vector<Coord>{{0, 0, 0}, {2, 2, 0}});
  CHECK(downsample_coords(in, 1) == in);
  CHECK(downsample_coords(std::vector<Coord>{{-1, -3, 5}}, 2) == std::vector<Coord>{{-2, -4, 4}});
}

TEST_CASE("downsample_coords matches a set oracle") {
  std::mt19937_64 rng(11);
  const auto coords = oracle::random_coords(100, 10, rng);
  const auto expected = oracle::downsample(coords, 2);
  const auto got = downsample_coords(coords, 2);
  CHECK(std::vector<Coord>(expected.begin(), expected.end()) == got);
}

TEST_CASE("kernel offsets are centered for odd and forward for even sizes") {
  const auto k3 = kernel_offsets(3);
  REQUIRE(k3.size() == 27);
  CHECK(k3.front() == Coord{-1, -1, -1});
  CHECK(k3[1] == Coord{-1, -1, 0});
  CHECK(k3[13] == Coord{0, 0, 0});
  CHECK(k3.back() == Coord{1, 1, 1});
  const auto k2 = kernel_offsets(2);
  REQUIRE(k2.size() == 8);
  CHECK(k2.front() == Coord{0, 0, 0});
  CHECK(k2.back() == Coord{1, 1, 1});
  CHECK(kernel_offsets(1) == std::vector<Coord>{{0, 0, 0}});
}

TEST_CASE("kernel map of a single voxel with K=1 is the identity") {
  const KernelMap km = build_kernel_map(std::vector<Coord>{{0, 0, 0}}, 1, 1, 1);
  REQUIRE(km.offsets.size() == 1);
  REQUIRE(km.pairs[0].size() == 1);
  CHECK(km.pairs[0][0] == KernelMap::Pair{0, 0});
  CHECK(km.is_identity());
}

TEST_CASE("kernel map of two neighbors with K=3") {
  const std::vector<Coord> in{{0, 0, 0}, {1, 0, 0}};
  const KernelMap km = build_kernel_map(in, 1, 3, 1);
  const auto idx = [&](Coord d) {
    return static_cast<std::size_t>(std::find(km.offsets.begin(), km.offsets.end(), d) - km.offsets.begin());
  };
  CHECK(km.pairs[idx({0, 0, 0})].size() == 2);
  REQUIRE(km.pairs[idx({1, 0, 0})].size() == 1);
  CHECK(km.pairs[idx({1, 0, 0})][0] == KernelMap::Pair{1, 0});
  REQUIRE(km.pairs[idx({-1, 0, 0})].size() == 1);
  CHECK(km.pairs[idx({-1, 0, 0})][0] == KernelMap::Pair{0, 1});
  CHECK(km.total_pairs() == 4);
  CHECK(km.out_coords == in);
}

TEST_CASE("kernel map with K=2, s=2 partitions the inputs") {
  const KernelMap km = build_kernel_map(std::vector<Coord>{{0, 0, 0}, {1, 1, 1}}, 1, 2, 2);
  CHECK(km.out_coords == std::vector<Coord>{{0, 0, 0}});
  CHECK(km.total_pairs() == 2);
}

TEST_CASE("stride-1 maps send every voxel to itself through the zero offset") {
  std::mt19937_64 rng(2);
  const auto coords = oracle::random_coords(40, 4, rng);
  for (int k : {1, 3, 5}) {
    const KernelMap km = build_kernel_map(coords, 1, k, 1);
    CHECK(km.out_coords == coords);
    const auto zero = static_cast<std::size_t>(
        std::find(km.offsets.begin(), km.offsets.end(), Coord{0, 0, 0}) - km.offsets.begin());
    REQUIRE(km.pairs[zero].size() == coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
      CHECK(km.pairs[zero][i].in == static_cast<int>(i));
      CHECK(km.pairs[zero][i].out == static_cast<int>(i));
    }
  }
}

TEST_CASE("kernel maps match a brute-force oracle") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const auto coords = oracle::random_coords(1 + trial * 12, 3, rng);
    for (int k : {1, 2, 3, 5}) {
      for (int s : {1, 2}) {
        for (int in_stride : {1, 2}) {
          std::vector<Coord> lattice;
          for (const Coord& c : coords) lattice.push_back({c[0] * in_stride, c[1] * in_stride, c[2] * in_stride});
          const KernelMap km = build_kernel_map(lattice, in_stride, k, s);
          const auto expected = oracle::kernel_pairs(lattice, in_stride, k, s);
          CHECK(pair_set(km) == expected);
          CHECK(km.total_pairs() == expected.size());
          const auto outs = oracle::downsample(lattice, in_stride * s);
          CHECK(km.out_coords == std::vector<Coord>(outs.begin(), outs.end()));
          for (const auto& list : km.pairs) {
            for (const auto& p : list) {
              CHECK(p.in < static_cast<int>(lattice.size()));
              CHECK(p.out < static_cast<int>(km.num_out()));
            }
          }
        }
      }
    }
  }
}

TEST_CASE("stride-1 kernel maps are equivariant under lattice translation") {
  std::mt19937_64 rng(23);
  const auto coords = oracle::random_coords(30, 4, rng);
  const Coord t{7, -3, 11};
  std::vector<Coord> moved;
  for (const Coord& c : coords) moved.push_back({c[0] + t[0], c[1] + t[1], c[2] + t[2]});
  for (int k : {2, 3, 5}) {
    const KernelMap a = build_kernel_map(coords, 1, k, 1);
    const KernelMap b = build_kernel_map(moved, 1, k, 1);
    CHECK(a.pairs == b.pairs);
    for (std::size_t i = 0; i < a.out_coords.size(); ++i) {
      const Coord& c = a.out_coords[i];
      CHECK(b.out_coords[i] == Coord{c[0] + t[0], c[1] + t[1], c[2] + t[2]});
    }
  }
}

TEST_CASE("merged kernel maps offset rows per segment") {
  const KernelMap a = build_kernel_map(std::vector<Coord>{{0, 0, 0}, {1, 0, 0}}, 1, 3, 1);
  const KernelMap b = build_kernel_map(std::vector<Coord>{{5, 5, 5}}, 1, 3, 1);
  const std::vector<KernelMap> parts{a, b};
  const KernelMap m = merge_kernel_maps(parts);
  CHECK(m.num_in == 3);
  CHECK(m.num_out() == 3);
  CHECK(m.total_pairs() == a.total_pairs() + b.total_pairs());
  const auto zero = 13;
  CHECK(m.pairs[zero].back() == KernelMap::Pair{2, 2});
}
