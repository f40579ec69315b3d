// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "svtnet/gradcheck.hpp"
#include "svtnet/model.hpp"
#include "svtnet/synth.hpp"

using namespace svtnet;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.descriptor_dim = 16;
  c.tokens = 2;
  c.reduction = 4;
  c.stem_channels = 8;
  c.mid_channels = 16;
  return c;
}

void randomize_buffers(SvtNet& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, buf] : net.params.buffers())
    buf = name.ends_with("running_var") ? oracle::random_matrix(1, buf.cols(), rng, 0.5, 2.0)
                                        : oracle::random_matrix(1, buf.cols(), rng, -0.2, 0.2);
  for (auto& [name, m] : net.params.params())
    if (name.ends_with(".bias") || name.ends_with(".beta")) m = oracle::random_matrix(1, m.cols(), rng, -0.1, 0.1);
}

PointCloud small_cloud(std::size_t n, std::uint64_t seed, double extent = 0.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, extent);
  PointCloud pc(n);
  for (auto& p : pc) p = {u(rng), u(rng), u(rng)};
  return pc;
}

PointCloud scene_cloud(std::uint64_t seed) {
  SyntheticSceneSpec spec;
  spec.seed = seed;
  spec.scenes = 1;
  spec.copies = 1;
  return generate_scenes(spec).front().cloud;
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "svtnet_test_model";
  fs::create_directories(dir);
  return dir / name;
}

double max_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

Vector oracle_descriptor(const SvtNet& net, const PointCloud& pc) {
  const oracle::Level stem = oracle::stem(net.params, pc, net.config.quant_step);
  const bool token_axis = net.config.token_axis == SoftmaxAxis::kToken;
  Matrix fused;
  switch (net.config.variant) {
    case Variant::kSvt:
      fused = oracle::add(oracle::asvt(net.params, stem.features), oracle::csvt(net.params, stem.features, token_axis));
      break;
    case Variant::kAsvtOnly: fused = oracle::asvt(net.params, stem.features); break;
    case Variant::kCsvtOnly: fused = oracle::csvt(net.params, stem.features, token_axis); break;
  }
  const auto d = oracle::gem(fused, net.params.param("gem.p")(0, 0), 1e-6);
  return Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
}

}  // namespace

TEST_CASE("default parameter counts match the block table") {
  const SvtNet net = SvtNet::build(ModelConfig{}, 0);
  const ParamReport r = net.count_params();
  const std::vector<std::pair<std::string, double>> table{
      {"conv0", 4.0e3},          {"convs[0]", 8.1e3},   {"resblocks[0]", 55.4e3}, {"convs[1]", 8.1e3},
      {"resblocks[1]", 168.3e3}, {"conv1x1", 16.3e3},   {"asvtblocks", 147.9e3},  {"csvtblocks", 526.8e3},
  };
  for (const auto& [block, expected] : table) {
    const auto it = std::find_if(r.blocks.begin(), r.blocks.end(), [&](const BlockCount& b) { return b.block == block; });
    REQUIRE(it != r.blocks.end());
    INFO(block << " " << it->params);
    CHECK(std::abs(static_cast<double>(it->params) - expected) <= 0.03 * expected);
  }
  CHECK(r.blocks.back().block == "GeM Pool");
  CHECK(r.blocks.back().params == 1);
  CHECK(r.total == 937129);
  CHECK(r.total == net.params.count());
  CHECK(net.params.count("conv0") == 4064);
  CHECK(net.params.count("conv1x1") == 16384);
}

TEST_CASE("variant totals") {
  ModelConfig c;
  c.variant = Variant::kAsvtOnly;
  const SvtNet a = SvtNet::build(c, 0);
  CHECK(a.count_params().total == 408737);
  CHECK_FALSE(a.params.has_param("csvt.conv_out.weight"));
  c.variant = Variant::kCsvtOnly;
  const SvtNet s = SvtNet::build(c, 0);
  CHECK(s.count_params().total == 789097);
  CHECK_FALSE(s.params.has_param("asvt.conv_out.weight"));
  CHECK(std::abs(static_cast<double>(a.count_params().total) - 0.4e6) <= 0.1 * 0.4e6);
  CHECK(std::abs(static_cast<double>(s.count_params().total) - 0.8e6) <= 0.1 * 0.8e6);
}

TEST_CASE("build initializes deterministically") {
  const SvtNet a = SvtNet::build(ModelConfig{}, 7);
  const SvtNet b = SvtNet::build(ModelConfig{}, 7);
  const SvtNet c = SvtNet::build(ModelConfig{}, 8);
  CHECK(a.params.flatten() == b.params.flatten());
  CHECK(a.params.flatten() != c.params.flatten());
  CHECK(a.params.param("gem.p")(0, 0) == 3.0);
  CHECK((a.params.param("conv0.norm.gamma").array() == 1.0).all());
  CHECK((a.params.param("asvt.conv_out.bias").array() == 0.0).all());
}

TEST_CASE("invalid configs are rejected") {
  ModelConfig c;
  c.reduction = 7;
  CHECK_THROWS(SvtNet::build(c, 0));
  c = ModelConfig{};
  c.tokens = 0;
  CHECK_THROWS(SvtNet::build(c, 0));
  c = ModelConfig{};
  c.descriptor_dim = 0;
  CHECK_THROWS(SvtNet::build(c, 0));
  CHECK_THROWS(parse_variant("svt2"));
  CHECK(parse_variant("asvt_only") == Variant::kAsvtOnly);
  CHECK(parse_fusion("concat_conv") == Fusion::kConcatConv);
}

TEST_CASE("embed is deterministic and ignores point order") {
  const SvtNet net = SvtNet::build(ModelConfig{}, 1);
  PointCloud pc = scene_cloud(3);
  const Vector a = net.embed(pc);
  CHECK(a.size() == 256);
  CHECK(a.allFinite());
  CHECK(net.embed(pc) == a);
  std::mt19937_64 rng(5);
  std::shuffle(pc.begin(), pc.end(), rng);
  CHECK((net.embed(pc) - a).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("embed matches the naive pipeline oracle") {
  for (Variant v : {Variant::kSvt, Variant::kAsvtOnly, Variant::kCsvtOnly}) {
    SvtNet net = SvtNet::build(tiny(v), 2);
    randomize_buffers(net, 3);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const PointCloud pc = small_cloud(300, s);
      const Vector got = net.embed(pc);
      const Vector want = oracle_descriptor(net, pc);
      INFO(to_string(v) << " cloud " << s);
      CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, want.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("default config on a 4096-point scene matches the oracle") {
  const SvtNet net = SvtNet::build(ModelConfig{}, 4);
  const PointCloud pc = scene_cloud(9);
  REQUIRE(pc.size() == 4096);
  ForwardTrace trace;
  const Vector got = net.embed(build_pyramid(pc, net.config.quant_step), &trace);
  const oracle::Level stem = oracle::stem(net.params, pc, net.config.quant_step);
  CHECK(max_diff(trace.stem[0], stem.features) <= 1e-10 * std::max(1.0, stem.features.cwiseAbs().maxCoeff()));
  const Vector want = oracle_descriptor(net, pc);
  CHECK(got.size() == 256);
  CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, want.cwiseAbs().maxCoeff()));
}

TEST_CASE("zeroed branch output convs leave the stem features") {
  SvtNet net = SvtNet::build(tiny(Variant::kSvt), 5);
  randomize_buffers(net, 6);
  for (const char* name : {"asvt.conv_out.weight", "asvt.conv_out.bias", "csvt.conv_out.weight", "csvt.conv_out.bias"})
    net.params.param(name).setZero();
  ForwardTrace trace;
  net.embed(build_pyramid(small_cloud(200, 7), net.config.quant_step), &trace);
  // Each branch alone is the identity, so the sum is twice the stem.
  CHECK(trace.fused[0] == trace.stem[0] + trace.stem[0]);
  for (Variant v : {Variant::kAsvtOnly, Variant::kCsvtOnly}) {
    SvtNet single = SvtNet::build(tiny(v), 5);
    for (auto& [name, m] : single.params.params())
      if (name.ends_with("conv_out.weight") || name.ends_with("conv_out.bias")) m.setZero();
    ForwardTrace t;
    single.embed(build_pyramid(small_cloud(200, 7), single.config.quant_step), &t);
    CHECK(t.fused[0] == t.stem[0]);
  }
}

TEST_CASE("add fusion equals the sum of the branches in either order") {
  SvtNet net = SvtNet::build(tiny(Variant::kSvt), 8);
  randomize_buffers(net, 9);
  ForwardTrace trace;
  net.embed(build_pyramid(small_cloud(250, 10), net.config.quant_step), &trace);
  SparseVoxelGrid g;
  g.features = trace.stem[0];
  g.coords.resize(static_cast<std::size_t>(g.features.rows()));
  const Matrix xa = asvt_forward(g, net.params, *net.arch.asvt).features;
  const Matrix xc = csvt_forward(g, net.params, *net.arch.csvt).features;
  CHECK(trace.fused[0] == xa + xc);
  CHECK(trace.fused[0] == xc + xa);
}

TEST_CASE("concat fusions") {
  ModelConfig c = tiny(Variant::kSvt);
  c.fusion = Fusion::kConcat;
  const SvtNet concat = SvtNet::build(c, 1);
  CHECK(concat.config.output_dim() == 32);
  CHECK(concat.embed(small_cloud(150, 2)).size() == 32);
  c.fusion = Fusion::kConcatConv;
  const SvtNet conv = SvtNet::build(c, 1);
  CHECK(conv.config.output_dim() == 16);
  CHECK(conv.params.has_param("fuse.weight"));
  CHECK(conv.embed(small_cloud(150, 2)).size() == 16);
}

TEST_CASE("a batched forward equals per-cloud embeds") {
  const SvtNet net = SvtNet::build(tiny(Variant::kSvt), 11);
  const VoxelPyramid a = build_pyramid(small_cloud(120, 1), 0.01);
  const VoxelPyramid b = build_pyramid(small_cloud(180, 2), 0.01);
  Tape t;
  Graph g(t, net.params, Mode::kEval);
  const VoxelPyramid* batch[] = {&a, &b};
  const Matrix d = t.value(net.forward(g, batch).descriptors);
  CHECK((d.row(0).transpose() - net.embed(a)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((d.row(1).transpose() - net.embed(b)).cwiseAbs().maxCoeff() < 1e-12);
  const std::vector<PointCloud> clouds{small_cloud(120, 1), small_cloud(180, 2), small_cloud(90, 3)};
  const Matrix all = net.embed_all(clouds, 3);
  CHECK(all.row(2).transpose() == net.embed(clouds[2]));
}

TEST_CASE("checkpoint round trip is bit exact") {
  SvtNet net = SvtNet::build(tiny(Variant::kSvt), 12);
  randomize_buffers(net, 13);
  const fs::path path = temp_path("roundtrip.ckpt");
  net.save(path);
  const SvtNet loaded = SvtNet::load(path);
  CHECK(loaded.params.flatten() == net.params.flatten());
  CHECK(loaded.params.buffers() == net.params.buffers());
  CHECK(loaded.count_params().total == net.count_params().total);
  const PointCloud pc = small_cloud(200, 14);
  CHECK(loaded.embed(pc) == net.embed(pc));
}

TEST_CASE("checkpoint format guards") {
  const SvtNet net = SvtNet::build(tiny(Variant::kAsvtOnly), 1);
  const fs::path path = temp_path("guard.ckpt");
  net.save(path);
  CHECK_THROWS_WITH(SvtNet::load(path, Variant::kSvt), "variant mismatch");
  CHECK_NOTHROW(SvtNet::load(path, Variant::kAsvtOnly));

  std::string bytes;
  {
    std::ifstream is(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(is), {});
  }
  const fs::path bad = temp_path("bad_magic.ckpt");
  {
    std::string copy = bytes;
    copy[0] = 'X';
    std::ofstream(bad, std::ios::binary) << copy;
  }
  CHECK_THROWS_WITH(SvtNet::load(bad), "bad magic");
  const fs::path cut = temp_path("truncated.ckpt");
  std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_WITH(SvtNet::load(cut), "truncated checkpoint");
  CHECK_THROWS(SvtNet::load(temp_path("missing.ckpt")));
}

TEST_CASE("empty clouds are rejected") {
  const SvtNet net = SvtNet::build(tiny(Variant::kSvt), 1);
  CHECK_THROWS_WITH(net.embed(PointCloud{}), "empty point cloud");
  CHECK_NOTHROW(net.embed(PointCloud{{0.0, 0.0, 0.0}}));
}

TEST_CASE("full tiny model passes the finite-difference check") {
  for (Variant v : {Variant::kSvt, Variant::kAsvtOnly, Variant::kCsvtOnly}) {
    for (Mode m : {Mode::kEval, Mode::kTrain}) {
      const GradCheckResult r = check_model_grads(1, v, m);
      INFO(r.name << " err " << r.error);
      CHECK(r.error < 1e-3);
    }
  }
}
