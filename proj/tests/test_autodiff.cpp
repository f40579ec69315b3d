// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "svtnet/autodiff.hpp"
#include "svtnet/gradcheck.hpp"

using namespace svtnet;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("forward shapes and values") {
  Tape t;
  std::mt19937_64 rng(1);
  const NodeId a = t.leaf(oracle::random_matrix(2, 3, rng));
  const NodeId b = t.leaf(oracle::random_matrix(3, 4, rng));
  const NodeId c = t.matmul(a, b);
  CHECK(t.value(c).rows() == 2);
  CHECK(t.value(c).cols() == 4);
  CHECK((t.value(c) - oracle::matmul(t.value(a), t.value(b))).cwiseAbs().maxCoeff() < 1e-14);

  const NodeId s = t.row_softmax(t.constant(mat({{0.0, 0.0}})));
  CHECK(t.value(s)(0, 0) == doctest::Approx(0.5));
  CHECK(t.value(s)(0, 1) == doctest::Approx(0.5));

  const NodeId g = t.gather_rows(t.constant(mat({{1}, {2}, {3}})), {2, 0});
  CHECK(t.value(g) == mat({{3}, {1}}));
}

TEST_CASE("shape mismatches name the op and the dims") {
  Tape t;
  const NodeId a = t.leaf(Matrix::Zero(2, 3));
  const NodeId b = t.leaf(Matrix::Zero(2, 3));
  CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("matmul"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("2x3"), std::invalid_argument);
  CHECK_THROWS_AS(t.add(a, t.leaf(Matrix::Zero(3, 3))), std::invalid_argument);
  CHECK_THROWS_AS(t.gather_rows(a, {5}), std::exception);
  CHECK_THROWS_AS(t.scatter_add_rows(a, {0}, 2), std::invalid_argument);
}

TEST_CASE("backward seeds one and needs a scalar loss") {
  Tape t;
  const NodeId x = t.leaf(mat({{1, 2}, {3, 4}}));
  const Gradients g = t.backward(t.sum(x));
  CHECK(g[x] == Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("relu backward is zero on negatives") {
  Tape t;
  const NodeId x = t.leaf(mat({{-1, 2}}));
  const Gradients g = t.backward(t.sum(t.relu(x)));
  CHECK(g[x] == mat({{0, 1}}));
}

TEST_CASE("relu and clamp_min pass no gradient at the threshold") {
  Tape t;
  const NodeId x = t.leaf(mat({{0.0, 0.5}}));
  const Gradients g = t.backward(t.sum(t.relu(x)));
  CHECK(g[x](0, 0) == 0.0);
  Tape u;
  const NodeId y = u.leaf(mat({{0.5, 0.7}}));
  const Gradients gy = u.backward(u.sum(u.clamp_min(y, 0.5)));
  CHECK(gy[y] == mat({{0.0, 1.0}}));
}

TEST_CASE("matmul gradient matches central differences") {
  std::mt19937_64 rng(9);
  const Matrix a0 = oracle::random_matrix(3, 3, rng);
  const Matrix b0 = oracle::random_matrix(3, 3, rng);
  Vector theta(18);
  theta << Eigen::Map<const Vector>(a0.data(), 9), Eigen::Map<const Vector>(b0.data(), 9);
  const Objective f = [](const Vector& th, Vector* grad) {
    Tape t;
    const NodeId a = t.leaf(Eigen::Map<const Matrix>(th.data(), 3, 3));
    const NodeId b = t.leaf(Eigen::Map<const Matrix>(th.data() + 9, 3, 3));
    const NodeId loss = t.sum(t.matmul(a, b));
    if (grad != nullptr) {
      const Gradients g = t.backward(loss);
      grad->resize(18);
      *grad << Eigen::Map<const Vector>(g[a].data(), 9), Eigen::Map<const Vector>(g[b].data(), 9);
    }
    return t.value(loss)(0, 0);
  };
  CHECK(grad_check(f, theta, 1e-5) < 1e-6);
}

TEST_CASE("grad_check on a quadratic") {
  const Objective f = [](const Vector& th, Vector* grad) {
    if (grad != nullptr) *grad = Vector::Constant(1, 2.0 * th[0]);
    return th[0] * th[0];
  };
  CHECK(grad_check(f, Vector::Constant(1, 3.0), 1e-4) < 1e-8);
}

TEST_CASE("grad_check rejects non-finite objectives and bad eps") {
  const Objective f = [](const Vector&, Vector* grad) {
    if (grad != nullptr) *grad = Vector::Zero(1);
    return std::nan("");
  };
  CHECK_THROWS(grad_check(f, Vector::Zero(1), 1e-4));
  const Objective g = [](const Vector&, Vector* grad) {
    if (grad != nullptr) *grad = Vector::Zero(1);
    return 0.0;
  };
  CHECK_THROWS(grad_check(g, Vector::Zero(1), 0.0));
}

TEST_CASE("gem pooling gradient w.r.t. p") {
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(5, 4, rng, 0.1, 2.0);
  const Objective f = [&](const Vector& th, Vector* grad) {
    Tape t;
    const NodeId p = t.leaf(Matrix::Constant(1, 1, th[0]));
    const NodeId xp = t.power(t.clamp_min(t.constant(x), 1e-6), p);
    const NodeId inv = t.power(p, t.constant(Matrix::Constant(1, 1, -1.0)));
    const NodeId out = t.power(t.reduce_mean_rows(xp), inv);
    const NodeId loss = t.sum(out);
    if (grad != nullptr) *grad = Vector::Constant(1, t.backward(loss)[p](0, 0));
    return t.value(loss)(0, 0);
  };
  CHECK(grad_check(f, Vector::Constant(1, 3.0), 1e-6) < 1e-4);
}

TEST_CASE("every primitive passes the finite-difference check") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const GradCheckResult& r : check_op_grads(seed)) {
      INFO(r.name << " seed " << seed << " err " << r.error);
      CHECK(r.error < 1e-5);
    }
  }
}

TEST_CASE("scatter_add_rows is the adjoint of gather_rows") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> pick(0, 6);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = oracle::random_matrix(7, 3, rng);
    std::vector<std::int32_t> idx(11);
    for (auto& i : idx) i = pick(rng);
    const Matrix v = oracle::random_matrix(11, 3, rng);
    Tape t;
    const Matrix gx = t.value(t.gather_rows(t.constant(x), idx));
    const Matrix sv = t.value(t.scatter_add_rows(t.constant(v), idx, 7));
    const double lhs = (gx.array() * v.array()).sum();
    const double rhs = (x.array() * sv.array()).sum();
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("row_softmax rows sum to one and ignore row shifts") {
  std::mt19937_64 rng(8);
  const Matrix x = oracle::random_matrix(6, 5, rng, -30.0, 30.0);
  Matrix shifted = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) shifted.row(i).array() += 100.0 * static_cast<double>(i);
  Tape t;
  const Matrix a = t.value(t.row_softmax(t.constant(x)));
  const Matrix b = t.value(t.row_softmax(t.constant(shifted)));
  for (Eigen::Index i = 0; i < a.rows(); ++i) CHECK(std::abs(a.row(i).sum() - 1.0) < 1e-9);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(t.value(t.row_softmax(t.constant(Matrix::Constant(1, 2, 1000.0)))).allFinite());
}

TEST_CASE("fan-out sums gradient contributions") {
  // f = sum(x*x) + sum(x*x), df/dx = 4x
  Tape t;
  const Matrix x0 = mat({{1.5, -2.0}, {0.25, 3.0}});
  const NodeId x = t.leaf(x0);
  const NodeId sq = t.mul(x, x);
  const NodeId loss = t.add(t.sum(sq), t.sum(sq));
  const Gradients g = t.backward(loss);
  CHECK((g[x] - 4.0 * x0).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("batch norm train mode reports biased statistics") {
  Tape t;
  BatchStats stats;
  const Matrix x = mat({{-1.0}, {1.0}});
  const NodeId y = t.batch_norm(t.constant(x), t.constant(Matrix::Ones(1, 1)), t.constant(Matrix::Zero(1, 1)),
                                Mode::kTrain, Matrix::Zero(1, 1), Matrix::Ones(1, 1), 1e-5, &stats);
  CHECK(t.value(y)(0, 0) == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
  CHECK(stats.mean(0, 0) == 0.0);
  CHECK(stats.variance(0, 0) == 1.0);
  CHECK(stats.rows == 2);
  CHECK_THROWS_WITH(t.batch_norm(t.constant(Matrix::Ones(1, 1)), t.constant(Matrix::Ones(1, 1)),
                                 t.constant(Matrix::Zero(1, 1)), Mode::kTrain, Matrix::Zero(1, 1),
                                 Matrix::Ones(1, 1), 1e-5),
                    doctest::Contains("degenerate batch statistics"));
}

TEST_CASE("leaves without requires_grad get no gradient") {
  Tape t;
  const NodeId c = t.constant(Matrix::Ones(2, 2));
  const NodeId x = t.leaf(Matrix::Ones(2, 2));
  const Gradients g = t.backward(t.sum(t.mul(c, x)));
  CHECK(g[c].size() == 0);
  CHECK(g[x] == Matrix::Ones(2, 2));
}
