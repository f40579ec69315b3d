// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>

namespace svtnet {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSvt: return "svt";
    case Variant::kAsvtOnly: return "asvt";
    case Variant::kCsvtOnly: return "csvt";
  }
  return "unknown";
}

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::kAdd: return "add";
    case Fusion::kConcat: return "concat";
    case Fusion::kConcatConv: return "concat_conv";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  if (s == "svt") return Variant::kSvt;
  if (s == "asvt" || s == "asvt_only") return Variant::kAsvtOnly;
  if (s == "csvt" || s == "csvt_only") return Variant::kCsvtOnly;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

Fusion parse_fusion(const std::string& s) {
  if (s == "add") return Fusion::kAdd;
  if (s == "concat") return Fusion::kConcat;
  if (s == "concat_conv") return Fusion::kConcatConv;
  throw std::invalid_argument("unknown fusion '" + s + "'");
}

void ModelConfig::validate() const {
  if (descriptor_dim <= 0) throw std::invalid_argument("descriptor dimension must be > 0");
  if (tokens < 1) throw std::invalid_argument("token count must be >= 1");
  if (reduction < 1 || descriptor_dim % reduction != 0)
    throw std::invalid_argument("reduction must divide the descriptor dimension");
  if (!(quant_step > 0.0)) throw std::invalid_argument("quantization step must be > 0");
  if (stem_channels < 1 || mid_channels < 1) throw std::invalid_argument("stem channels must be >= 1");
}

int ModelConfig::output_dim() const {
  return (variant == Variant::kSvt && fusion == Fusion::kConcat) ? 2 * descriptor_dim : descriptor_dim;
}

Architecture Architecture::make(const ModelConfig& config) {
  config.validate();
  const int c0 = config.stem_channels;
  const int c1 = config.mid_channels;
  const int d = config.descriptor_dim;
  Architecture a;
  a.conv0 = {"conv0", 5, 1, 1, c0, false};
  a.norm0 = {"conv0.norm", c0};
  a.convs0 = {"convs0", 2, 2, c0, c0, false};
  a.norms0 = {"convs0.norm", c0};
  a.resblock0 = ResBlockParams::make("resblock0", c0, c0);
  a.convs1 = {"convs1", 2, 2, c0, c0, false};
  a.norms1 = {"convs1.norm", c0};
  a.resblock1 = ResBlockParams::make("resblock1", c0, c1);
  a.conv1x1 = {"conv1x1", 1, 1, c1, d, false};
  if (config.has_asvt()) a.asvt = ASVTParams::make("asvt", d, config.reduction);
  if (config.has_csvt()) a.csvt = CSVTParams::make("csvt", d, config.tokens, config.token_axis);
  if (config.variant == Variant::kSvt && config.fusion == Fusion::kConcatConv)
    a.fuse = SPConvParams{"fuse", 1, 1, 2 * d, d, true};
  a.gem = {"gem", 3.0};
  return a;
}

VoxelPyramid build_pyramid(std::span<const Point> cloud, double quant_step) {
  VoxelPyramid p;
  p.input = voxelize(cloud, quant_step);
  p.conv0_map = build_kernel_map(p.input.coords, 1, 5, 1);
  p.down0_map = build_kernel_map(p.conv0_map.out_coords, 1, 2, 2);
  p.block0_map = build_kernel_map(p.down0_map.out_coords, 2, 3, 1);
  p.down1_map = build_kernel_map(p.block0_map.out_coords, 2, 2, 2);
  p.block1_map = build_kernel_map(p.down1_map.out_coords, 4, 3, 1);
  if (p.final_coords().empty()) throw std::invalid_argument("scene too small");
  return p;
}

SvtNet SvtNet::build(const ModelConfig& config, std::uint64_t seed) {
  SvtNet net;
  net.config = config;
  net.arch = Architecture::make(config);
  std::mt19937_64 rng(sub_seed(seed, "init"));
  const Architecture& a = net.arch;
  ParamSet& p = net.params;
  a.conv0.init(p, rng);
  a.norm0.init(p);
  a.convs0.init(p, rng);
  a.norms0.init(p);
  a.resblock0.init(p, rng);
  a.convs1.init(p, rng);
  a.norms1.init(p);
  a.resblock1.init(p, rng);
  a.conv1x1.init(p, rng);
  if (a.asvt) a.asvt->init(p, rng);
  if (a.csvt) a.csvt->init(p, rng);
  if (a.fuse) a.fuse->init(p, rng);
  a.gem.init(p);
  return net;
}

ForwardResult SvtNet::forward(Graph& g, std::span<const VoxelPyramid* const> clouds, ForwardTrace* trace) const {
  if (clouds.empty()) throw std::invalid_argument("forward: empty batch");
  Tape& t = g.tape();
  const Architecture& a = arch;

  auto merged = [&](KernelMap VoxelPyramid::*member) {
    if (clouds.size() == 1) return (clouds[0]->*member);
    std::vector<KernelMap> maps;
    maps.reserve(clouds.size());
    for (const VoxelPyramid* c : clouds) maps.push_back(c->*member);
    return merge_kernel_maps(maps);
  };

  std::size_t total_in = 0;
  for (const VoxelPyramid* c : clouds) total_in += c->input.size();
  NodeId x = t.constant(Matrix::Ones(static_cast<Eigen::Index>(total_in), 1));

  x = bn_relu(g, sp_conv(g, x, a.conv0, merged(&VoxelPyramid::conv0_map)), a.norm0);
  x = bn_relu(g, sp_conv(g, x, a.convs0, merged(&VoxelPyramid::down0_map)), a.norms0);
  x = res_block(g, x, a.resblock0, merged(&VoxelPyramid::block0_map));
  x = bn_relu(g, sp_conv(g, x, a.convs1, merged(&VoxelPyramid::down1_map)), a.norms1);
  x = res_block(g, x, a.resblock1, merged(&VoxelPyramid::block1_map));
  const NodeId stem = pointwise_conv(g, x, a.conv1x1);

  ForwardResult r;
  r.offsets.push_back(0);
  for (const VoxelPyramid* c : clouds) r.offsets.push_back(r.offsets.back() + c->final_coords().size());
  r.stem = stem;

  AsvtTrace* at = trace != nullptr ? &trace->asvt : nullptr;
  CsvtTrace* ct = trace != nullptr ? &trace->csvt : nullptr;
  if (config.variant == Variant::kAsvtOnly) {
    r.fused = asvt_forward(g, stem, r.offsets, *a.asvt, at);
  } else if (config.variant == Variant::kCsvtOnly) {
    r.fused = csvt_forward(g, stem, r.offsets, *a.csvt, ct);
  } else {
    const NodeId xa = asvt_forward(g, stem, r.offsets, *a.asvt, at);
    const NodeId xc = csvt_forward(g, stem, r.offsets, *a.csvt, ct);
    switch (config.fusion) {
      case Fusion::kAdd: r.fused = t.add(xa, xc); break;
      case Fusion::kConcat: r.fused = t.concat_cols(xa, xc); break;
      case Fusion::kConcatConv: r.fused = pointwise_conv(g, t.concat_cols(xa, xc), *a.fuse); break;
    }
  }
  if (trace != nullptr) {
    for (std::size_t b = 0; b + 1 < r.offsets.size(); ++b) {
      const auto lo = static_cast<Eigen::Index>(r.offsets[b]);
      const auto n = static_cast<Eigen::Index>(r.offsets[b + 1] - r.offsets[b]);
      trace->stem.push_back(t.value(stem).middleRows(lo, n));
      trace->fused.push_back(t.value(r.fused).middleRows(lo, n));
    }
  }
  r.descriptors = gem_pool_segments(g, r.fused, r.offsets, a.gem);
  return r;
}

Vector SvtNet::embed(const VoxelPyramid& pyramid, ForwardTrace* trace) const {
  Tape tape;
  Graph g(tape, params, Mode::kEval);
  const VoxelPyramid* batch[] = {&pyramid};
  const ForwardResult r = forward(g, batch, trace);
  return tape.value(r.descriptors).row(0).transpose();
}

Vector SvtNet::embed(std::span<const Point> cloud) const {
  return embed(build_pyramid(cloud, config.quant_step));
}

Matrix SvtNet::embed_all(std::span<const std::vector<Point>> clouds, int workers) const {
  Matrix out(static_cast<Eigen::Index>(clouds.size()), config.output_dim());
  const std::size_t n_workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(clouds.size(), 1));
  std::vector<std::exception_ptr> errors(n_workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < clouds.size(); i += n_workers) {
        out.row(static_cast<Eigen::Index>(i)) = embed(clouds[i]).transpose();
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (n_workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(work, w);
    for (auto& th : threads) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

ParamReport SvtNet::count_params() const {
  ParamReport report;
  const Architecture& a = arch;
  auto conv_row = [&](const std::string& label, const SPConvParams& c, const std::string& prefix) {
    const std::string k = std::to_string(c.kernel_size);
    report.blocks.push_back({label, k, std::to_string(c.stride), c.in_channels, c.out_channels, params.count(prefix)});
  };
  conv_row("conv0", a.conv0, "conv0");
  conv_row("convs[0]", a.convs0, "convs0");
  report.blocks.push_back({"resblocks[0]", "3", "1", a.resblock0.in_channels, a.resblock0.out_channels,
                           params.count("resblock0")});
  conv_row("convs[1]", a.convs1, "convs1");
  report.blocks.push_back({"resblocks[1]", "3", "1", a.resblock1.in_channels, a.resblock1.out_channels,
                           params.count("resblock1")});
  conv_row("conv1x1", a.conv1x1, "conv1x1");
  if (a.asvt) report.blocks.push_back({"asvtblocks", "1", "1", a.asvt->channels, a.asvt->channels, params.count("asvt")});
  if (a.csvt) report.blocks.push_back({"csvtblocks", "1", "1", a.csvt->channels, a.csvt->channels, params.count("csvt")});
  if (a.fuse) conv_row("fuse", *a.fuse, "fuse");
  report.blocks.push_back({"GeM Pool", "-", "-", 0, 0, params.count("gem")});
  report.total = params.count();
  return report;
}

}  // namespace svtnet
