// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace svtnet {

std::size_t SPConvParams::param_count() const {
  const std::size_t k3 = static_cast<std::size_t>(kernel_size) * kernel_size * kernel_size;
  return k3 * in_channels * out_channels + (bias ? static_cast<std::size_t>(out_channels) : 0);
}

void SPConvParams::init(ParamSet& params, std::mt19937_64& rng) const {
  if (kernel_size < 1 || stride < 1 || in_channels < 1 || out_channels < 1)
    throw std::invalid_argument(name + ": invalid convolution dims");
  const int k3 = kernel_size * kernel_size * kernel_size;
  const double fan_in = static_cast<double>(k3) * in_channels;
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(static_cast<Eigen::Index>(k3) * in_channels, out_channels);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  params.add_param(weight_name(), std::move(w));
  if (bias) params.add_param(bias_name(), Matrix::Zero(1, out_channels));
}

void NormParams::init(ParamSet& params) const {
  params.add_param(name + ".gamma", Matrix::Ones(1, channels));
  params.add_param(name + ".beta", Matrix::Zero(1, channels));
  params.add_buffer(name + ".running_mean", Matrix::Zero(1, channels));
  params.add_buffer(name + ".running_var", Matrix::Ones(1, channels));
}

ResBlockParams ResBlockParams::make(const std::string& name, int in_channels, int out_channels) {
  ResBlockParams b;
  b.name = name;
  b.in_channels = in_channels;
  b.out_channels = out_channels;
  b.conv1 = {name + ".conv1", 3, 1, in_channels, out_channels, false};
  b.norm1 = {name + ".norm1", out_channels};
  b.conv2 = {name + ".conv2", 3, 1, out_channels, out_channels, false};
  b.norm2 = {name + ".norm2", out_channels};
  if (in_channels != out_channels) {
    b.skip = SPConvParams{name + ".skip", 1, 1, in_channels, out_channels, false};
    b.skip_norm = NormParams{name + ".skip_norm", out_channels};
  }
  return b;
}

std::size_t ResBlockParams::param_count() const {
  std::size_t n = conv1.param_count() + norm1.param_count() + conv2.param_count() + norm2.param_count();
  if (skip) n += skip->param_count();
  if (skip_norm) n += skip_norm->param_count();
  return n;
}

void ResBlockParams::init(ParamSet& params, std::mt19937_64& rng) const {
  conv1.init(params, rng);
  norm1.init(params);
  conv2.init(params, rng);
  norm2.init(params);
  if (skip) skip->init(params, rng);
  if (skip_norm) skip_norm->init(params);
}

void GeMParams::init(ParamSet& params) const {
  if (!(init_p > 0.0)) throw std::invalid_argument(name + ": GeM exponent must be > 0");
  params.add_param(p_name(), Matrix::Constant(1, 1, init_p));
}

NodeId sp_conv(Graph& g, NodeId features, const SPConvParams& conv, const KernelMap& km) {
  Tape& t = g.tape();
  const Matrix& x = t.value(features);
  if (x.cols() != conv.in_channels)
    throw std::invalid_argument(conv.name + ": channel mismatch, expected " + std::to_string(conv.in_channels) +
                                " got " + std::to_string(x.cols()));
  if (km.kernel_size != conv.kernel_size || km.stride != conv.stride ||
      static_cast<std::size_t>(x.rows()) != km.num_in)
    throw std::invalid_argument(conv.name + ": kernel map does not match grid");

  const NodeId weight = g.param(conv.weight_name());
  NodeId out;
  if (km.is_identity()) {
    out = t.matmul(features, weight);
  } else {
    std::vector<NodeId> products;
    std::vector<std::int32_t> out_index;
    products.reserve(km.offsets.size());
    for (std::size_t k = 0; k < km.offsets.size(); ++k) {
      const auto& pairs = km.pairs[k];
      if (pairs.empty()) continue;
      std::vector<std::int32_t> in_index(pairs.size());
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        in_index[i] = pairs[i].in;
        out_index.push_back(pairs[i].out);
      }
      const std::size_t row0 = k * static_cast<std::size_t>(conv.in_channels);
      const NodeId w_k = t.slice_rows(weight, row0, row0 + static_cast<std::size_t>(conv.in_channels));
      products.push_back(t.matmul(t.gather_rows(features, std::move(in_index)), w_k));
    }
    if (products.empty()) {
      // No input reaches any output; keep the graph connected with a zero map.
      const NodeId w0 = t.slice_rows(weight, 0, static_cast<std::size_t>(conv.in_channels));
      out = t.scatter_add_rows(t.matmul(t.gather_rows(features, {}), w0), {}, km.num_out());
    } else {
      const NodeId stacked = products.size() == 1 ? products[0] : t.concat_rows(products);
      out = t.scatter_add_rows(stacked, std::move(out_index), km.num_out());
    }
  }
  if (conv.bias) out = t.add(out, g.param(conv.bias_name()));
  return out;
}

NodeId pointwise_conv(Graph& g, NodeId features, const SPConvParams& conv) {
  if (conv.kernel_size != 1 || conv.stride != 1)
    throw std::invalid_argument(conv.name + ": pointwise convolution requires K=1, s=1");
  Tape& t = g.tape();
  if (t.value(features).cols() != conv.in_channels)
    throw std::invalid_argument(conv.name + ": channel mismatch, expected " + std::to_string(conv.in_channels) +
                                " got " + std::to_string(t.value(features).cols()));
  NodeId out = t.matmul(features, g.param(conv.weight_name()));
  if (conv.bias) out = t.add(out, g.param(conv.bias_name()));
  return out;
}

NodeId batch_norm(Graph& g, NodeId features, const NormParams& norm) {
  Tape& t = g.tape();
  const Matrix& x = t.value(features);
  if (x.cols() != norm.channels)
    throw std::invalid_argument(norm.name + ": channel mismatch, expected " + std::to_string(norm.channels) +
                                " got " + std::to_string(x.cols()));
  if (x.rows() == 0) throw std::invalid_argument(norm.name + ": empty grid");
  const ParamSet& p = g.params();
  BatchStats stats;
  const NodeId y = t.batch_norm(features, g.param(norm.name + ".gamma"), g.param(norm.name + ".beta"), g.mode(),
                                p.buffer(norm.name + ".running_mean"), p.buffer(norm.name + ".running_var"),
                                kNormEps, &stats);
  if (g.mode() == Mode::kTrain) g.batch_stats()[norm.name] = std::move(stats);
  return y;
}

NodeId bn_relu(Graph& g, NodeId features, const NormParams& norm) {
  return g.tape().relu(batch_norm(g, features, norm));
}

NodeId res_block(Graph& g, NodeId features, const ResBlockParams& block, const KernelMap& km) {
  Tape& t = g.tape();
  NodeId h = bn_relu(g, sp_conv(g, features, block.conv1, km), block.norm1);
  h = batch_norm(g, sp_conv(g, h, block.conv2, km), block.norm2);
  NodeId skip = features;
  if (block.skip) skip = batch_norm(g, pointwise_conv(g, features, *block.skip), *block.skip_norm);
  return t.relu(t.add(h, skip));
}

NodeId gem_pool(Graph& g, NodeId features, const GeMParams& gem) {
  Tape& t = g.tape();
  if (t.value(features).rows() == 0) throw std::invalid_argument(gem.name + ": empty feature set");
  const NodeId p = g.param(gem.p_name());
  const NodeId inv_p = t.power(p, t.constant(Matrix::Constant(1, 1, -1.0)));
  const NodeId powered = t.power(t.clamp_min(features, kGemClamp), p);
  return t.power(t.reduce_mean_rows(powered), inv_p);
}

NodeId gem_pool_segments(Graph& g, NodeId features, std::span<const std::size_t> offsets,
                         const GeMParams& gem) {
  Tape& t = g.tape();
  if (offsets.size() < 2) throw std::invalid_argument(gem.name + ": no segments");
  const NodeId p = g.param(gem.p_name());
  const NodeId inv_p = t.power(p, t.constant(Matrix::Constant(1, 1, -1.0)));
  const NodeId powered = t.power(t.clamp_min(features, kGemClamp), p);
  std::vector<NodeId> means;
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    if (offsets[b + 1] <= offsets[b]) throw std::invalid_argument(gem.name + ": empty feature set");
    means.push_back(t.reduce_mean_rows(t.slice_rows(powered, offsets[b], offsets[b + 1])));
  }
  const NodeId stacked = means.size() == 1 ? means[0] : t.concat_rows(means);
  return t.power(stacked, inv_p);
}

SparseVoxelGrid sp_conv(const SparseVoxelGrid& grid, const ParamSet& params, const SPConvParams& conv,
                        const KernelMap& km) {
  Tape tape;
  Graph g(tape, params, Mode::kEval);
  const NodeId y = sp_conv(g, tape.constant(grid.features), conv, km);
  SparseVoxelGrid out;
  out.coords = km.out_coords;
  out.features = tape.value(y);
  out.stride = grid.stride * km.stride;
  out.quant_step = grid.quant_step;
  return out;
}

SparseVoxelGrid bn_relu(const SparseVoxelGrid& grid, const ParamSet& params, const NormParams& norm, Mode mode) {
  Tape tape;
  Graph g(tape, params, mode);
  const NodeId y = bn_relu(g, tape.constant(grid.features), norm);
  SparseVoxelGrid out = grid;
  out.features = tape.value(y);
  return out;
}

Vector gem_pool(const Matrix& features, double p) {
  if (features.rows() == 0) throw std::invalid_argument("gem_pool: empty feature set");
  ParamSet params;
  GeMParams gem{"gem", p};
  gem.init(params);
  Tape tape;
  Graph g(tape, params, Mode::kEval);
  return tape.value(gem_pool(g, tape.constant(features), gem)).row(0).transpose();
}

}  // namespace svtnet
