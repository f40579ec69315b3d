// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/gradcheck.hpp"

#include <functional>
#include <random>

#include "svtnet/asvt.hpp"
#include "svtnet/csvt.hpp"
#include "svtnet/layers.hpp"

namespace svtnet {
namespace {

constexpr double kOpTolerance = 1e-5;
constexpr double kLayerTolerance = 1e-4;
constexpr double kModelTolerance = 1e-3;

Matrix uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Pushes every entry at least `gap` away from `at`.
Matrix away_from(Matrix m, double at, double gap) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double d = m.data()[i] - at;
    m.data()[i] = at + (d < 0.0 ? -1.0 : 1.0) * (gap + std::abs(d));
  }
  return m;
}

Matrix from_theta(const Vector& theta, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(theta.data() + offset, rows, cols);
}

// sum(out .* R) for a fixed random R, so every output entry matters.
NodeId weighted_sum(Tape& t, NodeId out, const Matrix& weights) {
  return t.sum(t.mul(out, t.constant(weights)));
}

using OpBuilder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

GradCheckResult check_op(const std::string& name, const std::vector<Matrix>& inputs, const OpBuilder& build,
                         std::mt19937_64& rng) {
  Vector theta(0);
  for (const Matrix& m : inputs) {
    const Eigen::Index at = theta.size();
    theta.conservativeResize(at + m.size());
    theta.segment(at, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
  }

  Matrix weights;
  {
    Tape t;
    std::vector<NodeId> ids;
    for (const Matrix& m : inputs) ids.push_back(t.leaf(m));
    const Matrix& out = t.value(build(t, ids));
    weights = uniform(out.rows(), out.cols(), rng);
  }

  const Objective f = [&](const Vector& th, Vector* grad) {
    Tape t;
    std::vector<NodeId> ids;
    Eigen::Index at = 0;
    for (const Matrix& m : inputs) {
      ids.push_back(t.leaf(from_theta(th, at, m.rows(), m.cols())));
      at += m.size();
    }
    const NodeId loss = weighted_sum(t, build(t, ids), weights);
    if (grad != nullptr) {
      const Gradients g = t.backward(loss);
      grad->resize(th.size());
      at = 0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const Matrix& gi = g[ids[i]];
        grad->segment(at, gi.size()) = Eigen::Map<const Vector>(gi.data(), gi.size());
        at += gi.size();
      }
    }
    return t.value(loss)(0, 0);
  };
  return {name, "op", grad_check(f, theta, kGradCheckEps), kOpTolerance};
}

using LayerBuilder = std::function<NodeId(Graph&, NodeId)>;

// Checks a layer w.r.t. its parameters and its input features.
GradCheckResult check_layer(const std::string& name, const ParamSet& params, const Matrix& input,
                            const LayerBuilder& build, std::mt19937_64& rng, Mode mode = Mode::kEval) {
  const Vector flat = params.flatten();
  const Eigen::Index np = flat.size();
  Vector theta(np + input.size());
  theta.head(np) = flat;
  theta.tail(input.size()) = Eigen::Map<const Vector>(input.data(), input.size());

  Matrix weights;
  {
    Tape t;
    Graph g(t, params, mode);
    const Matrix& out = t.value(build(g, t.leaf(input)));
    weights = uniform(out.rows(), out.cols(), rng);
  }

  const Objective f = [&](const Vector& th, Vector* grad) {
    ParamSet p = params;
    p.unflatten(th.head(np));
    Tape t;
    Graph g(t, p, mode);
    const NodeId x = t.leaf(from_theta(th, np, input.rows(), input.cols()));
    const NodeId loss = weighted_sum(t, build(g, x), weights);
    if (grad != nullptr) {
      const Gradients gr = t.backward(loss);
      const auto named = g.param_grads(gr);
      grad->setZero(th.size());
      Eigen::Index at = 0;
      for (const auto& [key, value] : p.params()) {
        const auto it = named.find(key);
        if (it != named.end()) grad->segment(at, value.size()) = Eigen::Map<const Vector>(it->second.data(), value.size());
        at += value.size();
      }
      const Matrix& gx = gr[x];
      grad->tail(gx.size()) = Eigen::Map<const Vector>(gx.data(), gx.size());
    }
    return t.value(loss)(0, 0);
  };
  return {name, "layer", grad_check(f, theta, kGradCheckEps), kLayerTolerance};
}

std::vector<Coord> random_coords(std::size_t n, int extent, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, extent - 1);
  std::vector<Coord> coords;
  while (coords.size() < n) {
    coords.push_back({u(rng), u(rng), u(rng)});
    coords = sorted_unique(coords);
  }
  return coords;
}

PointCloud random_cloud(std::size_t n, double extent, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, extent);
  PointCloud pc(n);
  for (Point& p : pc) p = {u(rng), u(rng), u(rng)};
  return pc;
}

}  // namespace

std::vector<GradCheckResult> check_op_grads(std::uint64_t seed) {
  std::mt19937_64 rng(sub_seed(seed, "gradcheck.op"));
  std::vector<GradCheckResult> out;
  auto run = [&](const std::string& name, std::vector<Matrix> inputs, const OpBuilder& build) {
    out.push_back(check_op(name, inputs, build, rng));
  };
  using Ids = const std::vector<NodeId>&;

  run("matmul", {uniform(3, 4, rng), uniform(4, 2, rng)}, [](Tape& t, Ids x) { return t.matmul(x[0], x[1]); });
  run("transpose", {uniform(3, 4, rng)}, [](Tape& t, Ids x) { return t.transpose(x[0]); });
  run("add", {uniform(3, 4, rng), uniform(3, 4, rng)}, [](Tape& t, Ids x) { return t.add(x[0], x[1]); });
  run("add_broadcast", {uniform(3, 4, rng), uniform(1, 4, rng)}, [](Tape& t, Ids x) { return t.add(x[0], x[1]); });
  run("sub", {uniform(3, 4, rng), uniform(3, 4, rng)}, [](Tape& t, Ids x) { return t.sub(x[0], x[1]); });
  run("sub_broadcast", {uniform(3, 4, rng), uniform(1, 4, rng)}, [](Tape& t, Ids x) { return t.sub(x[0], x[1]); });
  run("mul", {uniform(3, 4, rng), uniform(3, 4, rng)}, [](Tape& t, Ids x) { return t.mul(x[0], x[1]); });
  run("scale", {uniform(3, 4, rng)}, [](Tape& t, Ids x) { return t.scale(x[0], 2.5); });
  run("row_softmax", {uniform(3, 5, rng, -2.0, 2.0)}, [](Tape& t, Ids x) { return t.row_softmax(x[0]); });
  run("relu", {away_from(uniform(3, 4, rng), 0.0, 0.1)}, [](Tape& t, Ids x) { return t.relu(x[0]); });
  run("clamp_min", {away_from(uniform(3, 4, rng), 0.3, 0.1)}, [](Tape& t, Ids x) { return t.clamp_min(x[0], 0.3); });
  run("power", {uniform(3, 4, rng, 0.5, 1.5), Matrix::Constant(1, 1, 2.3)},
      [](Tape& t, Ids x) { return t.power(x[0], x[1]); });
  run("gather_rows", {uniform(4, 3, rng)}, [](Tape& t, Ids x) { return t.gather_rows(x[0], {2, 0, 2, 3, 1}); });
  run("scatter_add_rows", {uniform(5, 3, rng)},
      [](Tape& t, Ids x) { return t.scatter_add_rows(x[0], {1, 0, 1, 3, 3}, 4); });
  run("reduce_mean_rows", {uniform(5, 3, rng)}, [](Tape& t, Ids x) { return t.reduce_mean_rows(x[0]); });
  run("slice_rows", {uniform(5, 3, rng)}, [](Tape& t, Ids x) { return t.slice_rows(x[0], 1, 4); });
  run("concat_rows", {uniform(2, 3, rng), uniform(1, 3, rng), uniform(3, 3, rng)},
      [](Tape& t, Ids x) { return t.concat_rows(x); });
  run("concat_cols", {uniform(3, 2, rng), uniform(3, 4, rng)}, [](Tape& t, Ids x) { return t.concat_cols(x[0], x[1]); });
  run("sum", {uniform(3, 4, rng)}, [](Tape& t, Ids x) { return t.sum(x[0]); });

  const Matrix no_mean = Matrix::Zero(1, 3);
  const Matrix no_var = Matrix::Ones(1, 3);
  run("batch_norm_train", {uniform(6, 3, rng), uniform(1, 3, rng, 0.5, 1.5), uniform(1, 3, rng)},
      [&](Tape& t, Ids x) { return t.batch_norm(x[0], x[1], x[2], Mode::kTrain, no_mean, no_var, kNormEps); });
  const Matrix run_mean = uniform(1, 3, rng);
  const Matrix run_var = uniform(1, 3, rng, 0.5, 2.0);
  run("batch_norm_eval", {uniform(6, 3, rng), uniform(1, 3, rng, 0.5, 1.5), uniform(1, 3, rng)},
      [&](Tape& t, Ids x) { return t.batch_norm(x[0], x[1], x[2], Mode::kEval, run_mean, run_var, kNormEps); });
  return out;
}

std::vector<GradCheckResult> check_layer_grads(std::uint64_t seed) {
  std::mt19937_64 rng(sub_seed(seed, "gradcheck.layer"));
  std::vector<GradCheckResult> out;

  const std::vector<Coord> coords = random_coords(14, 4, rng);
  const std::size_t n = coords.size();
  const KernelMap k3 = build_kernel_map(coords, 1, 3, 1);
  const KernelMap k2 = build_kernel_map(coords, 1, 2, 2);
  const std::vector<std::size_t> segments{0, 6, n};

  {
    ParamSet p;
    const SPConvParams conv{"conv", 3, 1, 3, 4, true};
    conv.init(p, rng);
    out.push_back(check_layer("sp_conv_k3", p, uniform(n, 3, rng), [&](Graph& g, NodeId x) {
      return sp_conv(g, x, conv, k3);
    }, rng));
  }
  {
    ParamSet p;
    const SPConvParams conv{"down", 2, 2, 3, 4, false};
    conv.init(p, rng);
    out.push_back(check_layer("sp_conv_k2_s2", p, uniform(n, 3, rng), [&](Graph& g, NodeId x) {
      return sp_conv(g, x, conv, k2);
    }, rng));
  }
  {
    ParamSet p;
    const SPConvParams conv{"pw", 1, 1, 3, 4, true};
    conv.init(p, rng);
    out.push_back(check_layer("pointwise_conv", p, uniform(n, 3, rng), [&](Graph& g, NodeId x) {
      return pointwise_conv(g, x, conv);
    }, rng));
  }
  {
    ParamSet p;
    const NormParams norm{"norm", 3};
    norm.init(p);
    p.param("norm.gamma") = uniform(1, 3, rng, 0.5, 1.5);
    p.param("norm.beta") = uniform(1, 3, rng, -0.2, 0.2);
    p.buffer("norm.running_mean") = uniform(1, 3, rng, -0.2, 0.2);
    p.buffer("norm.running_var") = uniform(1, 3, rng, 0.5, 2.0);
    for (Mode mode : {Mode::kEval, Mode::kTrain}) {
      const std::string suffix = mode == Mode::kEval ? "" : "_train";
      out.push_back(check_layer("batch_norm" + suffix, p, uniform(n, 3, rng), [&](Graph& g, NodeId x) {
        return batch_norm(g, x, norm);
      }, rng, mode));
      out.push_back(check_layer("bn_relu" + suffix, p, uniform(n, 3, rng), [&](Graph& g, NodeId x) {
        return bn_relu(g, x, norm);
      }, rng, mode));
    }
  }
  {
    ParamSet p;
    const ResBlockParams block = ResBlockParams::make("block", 3, 4);
    block.init(p, rng);
    for (Mode mode : {Mode::kEval, Mode::kTrain}) {
      out.push_back(check_layer(mode == Mode::kEval ? "res_block" : "res_block_train", p, uniform(n, 3, rng),
                                [&](Graph& g, NodeId x) { return res_block(g, x, block, k3); }, rng, mode));
    }
  }
  {
    ParamSet p;
    const GeMParams gem{"gem", 3.0};
    gem.init(p);
    out.push_back(check_layer("gem_pool", p, uniform(n, 4, rng, 0.1, 1.0), [&](Graph& g, NodeId x) {
      return gem_pool_segments(g, x, segments, gem);
    }, rng));
  }
  {
    ParamSet p;
    const ASVTParams asvt = ASVTParams::make("asvt", 8, 2);
    asvt.init(p, rng);
    out.push_back(check_layer("asvt", p, uniform(n, 8, rng), [&](Graph& g, NodeId x) {
      return asvt_forward(g, x, segments, asvt);
    }, rng));
  }
  for (SoftmaxAxis axis : {SoftmaxAxis::kToken, SoftmaxAxis::kVoxel}) {
    const std::string suffix = axis == SoftmaxAxis::kToken ? "token_axis" : "voxel_axis";
    ParamSet p;
    const CSVTParams csvt = CSVTParams::make("csvt", 4, 3, axis);
    csvt.init(p, rng);
    out.push_back(check_layer("csvt_tokenize_" + suffix, p, uniform(n, 4, rng), [&](Graph& g, NodeId x) {
      return tokenize(g, x, csvt).tokens;
    }, rng));
    out.push_back(check_layer("csvt_transformer_" + suffix, p, uniform(3, 4, rng), [&](Graph& g, NodeId x) {
      return token_transformer(g, x, csvt);
    }, rng));
    out.push_back(check_layer("csvt_" + suffix, p, uniform(n, 4, rng), [&](Graph& g, NodeId x) {
      return csvt_forward(g, x, segments, csvt);
    }, rng));
  }
  return out;
}

GradCheckResult check_model_grads(std::uint64_t seed, Variant variant, Mode mode) {
  std::mt19937_64 rng(sub_seed(seed, "gradcheck.model"));
  ModelConfig config;
  config.variant = variant;
  config.descriptor_dim = 16;
  config.tokens = 2;
  config.reduction = 4;
  config.quant_step = 0.02;
  config.stem_channels = 4;
  config.mid_channels = 8;
  SvtNet net = SvtNet::build(config, seed);
  for (auto& [name, value] : net.params.buffers()) {
    const bool is_var = name.ends_with(".running_var");
    value = uniform(value.rows(), value.cols(), rng, is_var ? 0.5 : -0.2, is_var ? 2.0 : 0.2);
  }

  // Two clouds of at most 10 input voxels each.
  std::vector<VoxelPyramid> pyramids;
  for (int i = 0; i < 2; ++i) pyramids.push_back(build_pyramid(random_cloud(10, 0.1, rng), config.quant_step));
  const std::vector<const VoxelPyramid*> batch{&pyramids[0], &pyramids[1]};

  const Objective f = [&](const Vector& theta, Vector* grad) {
    ParamSet p = net.params;
    p.unflatten(theta);
    SvtNet local{net.config, net.arch, std::move(p)};
    Tape t;
    Graph g(t, local.params, mode);
    const NodeId d = local.forward(g, batch).descriptors;
    const NodeId loss = t.power(t.sum(t.mul(d, d)), t.constant(Matrix::Constant(1, 1, 0.5)));
    if (grad != nullptr) {
      const auto named = g.param_grads(t.backward(loss));
      grad->setZero(theta.size());
      Eigen::Index at = 0;
      for (const auto& [key, value] : local.params.params()) {
        const auto it = named.find(key);
        if (it != named.end()) grad->segment(at, value.size()) = Eigen::Map<const Vector>(it->second.data(), value.size());
        at += value.size();
      }
    }
    return t.value(loss)(0, 0);
  };
  const std::string suffix = mode == Mode::kEval ? "" : "_train";
  return {"model_" + to_string(variant) + suffix, "model", grad_check(f, net.params.flatten(), kGradCheckEps),
          kModelTolerance};
}

}  // namespace svtnet
