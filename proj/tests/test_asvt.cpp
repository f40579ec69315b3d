// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "svtnet/asvt.hpp"

using namespace svtnet;

namespace {

struct Fixture {
  ASVTParams asvt;
  ParamSet ps;

  Fixture(int c, int r, std::uint64_t seed) : asvt(ASVTParams::make("asvt", c, r)) {
    std::mt19937_64 rng(seed);
    asvt.init(ps, rng);
    // Non-zero biases so the oracle exercises them.
    for (auto& [name, m] : ps.params())
      if (name.ends_with(".bias")) m = oracle::random_matrix(1, m.cols(), rng, -0.5, 0.5);
  }

  const Matrix& w(const std::string& conv) const { return ps.param("asvt." + conv + ".weight"); }
  const Matrix& b(const std::string& conv) const { return ps.param("asvt." + conv + ".bias"); }

  Matrix oracle_forward(const Matrix& x) const {
    const Matrix v = oracle::linear(x, w("conv_v"), b("conv_v"));
    const Matrix q = oracle::linear(x, w("conv_q"), b("conv_q"));
    const Matrix k = oracle::linear(x, w("conv_k"), b("conv_k"));
    const Matrix s = oracle::softmax_rows(oracle::matmul(q, oracle::transpose(k)));
    return oracle::add(x, oracle::linear(oracle::matmul(s, v), w("conv_out"), b("conv_out")));
  }
};

SparseVoxelGrid grid_of(std::size_t n, const Matrix& x) {
  SparseVoxelGrid g;
  for (std::size_t i = 0; i < n; ++i) g.coords.push_back({static_cast<int>(i), 0, 0});
  g.features = x;
  return g;
}

}  // namespace

TEST_CASE("asvt parameter count at C=256, r=8") {
  const std::size_t n = ASVTParams::make("asvt", 256, 8).param_count();
  CHECK(n == 148032);
  CHECK(std::abs(static_cast<double>(n) - 147900.0) <= 0.03 * 147900.0);
  CHECK(ASVTParams::make("asvt", 256, 8).reduced_channels() == 32);
}

TEST_CASE("attention_map examples") {
  CHECK(attention_map(Matrix::Constant(1, 2, 0.3), Matrix::Constant(1, 2, -4.0)) == Matrix::Ones(1, 1));
  const Matrix uniform = attention_map(Matrix::Zero(5, 2), Matrix::Ones(5, 2));
  CHECK((uniform.array() == 0.2).all());
  std::mt19937_64 rng(1);
  const Matrix q = oracle::random_matrix(4, 2, rng);
  const Matrix k = oracle::random_matrix(4, 2, rng);
  const Matrix s = attention_map(q, k);
  CHECK((s - oracle::softmax_rows(oracle::matmul(q, oracle::transpose(k)))).cwiseAbs().maxCoeff() < 1e-15);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(s.row(i).sum() - 1.0) < 1e-9);
  CHECK_THROWS(attention_map(Matrix(0, 2), Matrix(0, 2)));
  CHECK_THROWS(attention_map(Matrix::Zero(3, 2), Matrix::Zero(3, 3)));
}

TEST_CASE("attention rows sum to one regardless of scale") {
  std::mt19937_64 rng(2);
  for (double scale : {1e-6, 1.0, 1e3, 1e6}) {
    const Matrix s = attention_map(scale * oracle::random_matrix(20, 4, rng), oracle::random_matrix(20, 4, rng));
    CHECK(s.allFinite());
    for (Eigen::Index i = 0; i < s.rows(); ++i) CHECK(std::abs(s.row(i).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("asvt with zeroed conv_out is the identity") {
  Fixture f(16, 8, 3);
  f.ps.param("asvt.conv_out.weight").setZero();
  f.ps.param("asvt.conv_out.bias").setZero();
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(11, 16, rng);
  const SparseVoxelGrid out = asvt_forward(grid_of(11, x), f.ps, f.asvt);
  CHECK(out.features == x);
}

TEST_CASE("asvt on one voxel adds conv_out(conv_v(x))") {
  Fixture f(8, 4, 5);
  std::mt19937_64 rng(6);
  const Matrix x = oracle::random_matrix(1, 8, rng);
  const Matrix expected = oracle::add(
      x, oracle::linear(oracle::linear(x, f.w("conv_v"), f.b("conv_v")), f.w("conv_out"), f.b("conv_out")));
  CHECK((asvt_forward(grid_of(1, x), f.ps, f.asvt).features - expected).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("asvt forward matches a dense oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Fixture f(8, 4, seed);
    std::mt19937_64 rng(seed + 100);
    for (std::size_t n : {1u, 2u, 5u, 17u, 50u}) {
      const Matrix x = oracle::random_matrix(static_cast<Eigen::Index>(n), 8, rng);
      const SparseVoxelGrid out = asvt_forward(grid_of(n, x), f.ps, f.asvt);
      CHECK(out.coords == grid_of(n, x).coords);
      CHECK((out.features - f.oracle_forward(x)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("asvt attends within each segment only") {
  Fixture f(8, 4, 9);
  std::mt19937_64 rng(10);
  const Matrix a = oracle::random_matrix(4, 8, rng);
  const Matrix b = oracle::random_matrix(6, 8, rng);
  Matrix stacked(10, 8);
  stacked << a, b;
  Tape t;
  Graph g(t, f.ps, Mode::kEval);
  const std::size_t offsets[] = {0, 4, 10};
  AsvtTrace trace;
  const Matrix out = t.value(asvt_forward(g, t.constant(stacked), offsets, f.asvt, &trace));
  CHECK((out.topRows(4) - f.oracle_forward(a)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((out.bottomRows(6) - f.oracle_forward(b)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(trace.attention.size() == 2);
  CHECK(trace.attention[0].rows() == 4);
  CHECK(trace.attention[1].cols() == 6);
}

TEST_CASE("asvt permutes with its input rows") {
  Fixture f(8, 4, 11);
  std::mt19937_64 rng(12);
  const Matrix x = oracle::random_matrix(9, 8, rng);
  std::vector<int> perm{3, 8, 0, 1, 7, 2, 6, 4, 5};
  Matrix px(9, 8);
  for (int i = 0; i < 9; ++i) px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  const Matrix y = asvt_forward(grid_of(9, x), f.ps, f.asvt).features;
  const Matrix py = asvt_forward(grid_of(9, px), f.ps, f.asvt).features;
  for (int i = 0; i < 9; ++i) CHECK((py.row(i) - y.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("asvt rejects a channel mismatch") {
  Fixture f(8, 4, 1);
  CHECK_THROWS(asvt_forward(grid_of(3, Matrix::Ones(3, 7)), f.ps, f.asvt));
}
