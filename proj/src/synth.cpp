// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace svtnet {
namespace {

enum class Shape { kBox, kCylinder, kWall, kGround };

struct Primitive {
  Shape shape = Shape::kBox;
  double cx = 0.0, cy = 0.0, z0 = 0.0;
  double sx = 0.0, sy = 0.0, h = 0.0;  // half extents (box, ground), radius in sx (cylinder)
  double yaw = 0.0;

  double area() const {
    switch (shape) {
      case Shape::kBox: return 8.0 * (sx * h + sy * h) + 4.0 * sx * sy;
      case Shape::kCylinder: return 2.0 * std::numbers::pi * sx * h * 2.0 + std::numbers::pi * sx * sx;
      case Shape::kWall: return 2.0 * sx * 2.0 * h;
      case Shape::kGround: return 4.0 * sx * sy;
    }
    return 0.0;
  }
};

constexpr double kGroundZ = -0.6;

Point rotate(double x, double y, double z, const Primitive& p) {
  const double c = std::cos(p.yaw);
  const double s = std::sin(p.yaw);
  return {p.cx + c * x - s * y, p.cy + s * x + c * y, z};
}

Point sample_surface(const Primitive& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  switch (p.shape) {
    case Shape::kGround:
      return {p.cx + u(rng) * p.sx, p.cy + u(rng) * p.sy, kGroundZ};
    case Shape::kWall:
      return rotate(u(rng) * p.sx, 0.0, p.z0 + u01(rng) * 2.0 * p.h, p);
    case Shape::kCylinder: {
      const double side = 4.0 * std::numbers::pi * p.sx * p.h;
      const double top = std::numbers::pi * p.sx * p.sx;
      const double a = u01(rng) * 2.0 * std::numbers::pi;
      if (u01(rng) * (side + top) < side) {
        return rotate(p.sx * std::cos(a), p.sx * std::sin(a), p.z0 + u01(rng) * 2.0 * p.h, p);
      }
      const double r = p.sx * std::sqrt(u01(rng));
      return rotate(r * std::cos(a), r * std::sin(a), p.z0 + 2.0 * p.h, p);
    }
    case Shape::kBox: {
      // Four sides and the roof, weighted by area.
      const double fx = 2.0 * p.sx * 2.0 * p.h;
      const double fy = 2.0 * p.sy * 2.0 * p.h;
      const double roof = 4.0 * p.sx * p.sy;
      const double pick = u01(rng) * (2.0 * fx + 2.0 * fy + roof);
      const double z = p.z0 + u01(rng) * 2.0 * p.h;
      if (pick < fx) return rotate(u(rng) * p.sx, -p.sy, z, p);
      if (pick < 2.0 * fx) return rotate(u(rng) * p.sx, p.sy, z, p);
      if (pick < 2.0 * fx + fy) return rotate(-p.sx, u(rng) * p.sy, z, p);
      if (pick < 2.0 * fx + 2.0 * fy) return rotate(p.sx, u(rng) * p.sy, z, p);
      return rotate(u(rng) * p.sx, u(rng) * p.sy, p.z0 + 2.0 * p.h, p);
    }
  }
  return {};
}

std::vector<Primitive> make_scene(const SyntheticSceneSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-0.75, 0.75);
  std::uniform_real_distribution<double> half(spec.min_half_extent, spec.max_half_extent);
  std::uniform_real_distribution<double> height(spec.min_half_extent, 2.0 * spec.max_half_extent);
  std::uniform_real_distribution<double> yaw(0.0, std::numbers::pi);
  std::uniform_int_distribution<int> count(spec.min_primitives, spec.max_primitives);
  std::uniform_int_distribution<int> kind(0, 2);

  std::vector<Primitive> prims;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    Primitive p;
    p.shape = static_cast<Shape>(kind(rng));
    p.cx = pos(rng);
    p.cy = pos(rng);
    p.z0 = kGroundZ;
    p.sx = half(rng);
    p.sy = half(rng);
    p.h = height(rng);
    p.yaw = yaw(rng);
    if (p.shape == Shape::kWall) p.sx *= 2.0;
    prims.push_back(p);
  }
  return prims;
}

PointCloud sample_scene(const std::vector<Primitive>& prims, const SyntheticSceneSpec& spec, std::mt19937_64& rng) {
  Primitive ground;
  ground.shape = Shape::kGround;
  ground.sx = 1.0;
  ground.sy = 1.0;

  std::vector<double> weights;
  for (const Primitive& p : prims) weights.push_back(p.area());
  std::discrete_distribution<std::size_t> which(weights.begin(), weights.end());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.copy_jitter);
  std::uniform_real_distribution<double> shift(-spec.copy_shift, spec.copy_shift);
  const Point offset{shift(rng), shift(rng), shift(rng)};

  PointCloud pc;
  pc.reserve(spec.points);
  for (std::size_t i = 0; i < spec.points; ++i) {
    const Primitive& p = u01(rng) < spec.ground_fraction ? ground : prims[which(rng)];
    Point q = sample_surface(p, rng);
    q.x = std::clamp(q.x + offset.x + noise(rng), -1.0, 1.0);
    q.y = std::clamp(q.y + offset.y + noise(rng), -1.0, 1.0);
    q.z = std::clamp(q.z + offset.z + noise(rng), -1.0, 1.0);
    pc.push_back(q);
  }
  return pc;
}

}  // namespace

void SyntheticSceneSpec::validate() const {
  if (points < 64) throw std::invalid_argument("points per cloud must be >= 64");
  if (scenes < 1 || copies < 1) throw std::invalid_argument("scene and copy counts must be >= 1");
  if (min_primitives < 1 || max_primitives < min_primitives) throw std::invalid_argument("bad primitive range");
  if (!(spacing > 0.0) || copy_offset < 0.0) throw std::invalid_argument("bad scene spacing");
}

std::vector<SyntheticCloud> generate_scenes(const SyntheticSceneSpec& spec) {
  spec.validate();
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(spec.scenes))));
  std::vector<SyntheticCloud> out;
  out.reserve(spec.scenes * spec.copies);
  for (std::size_t s = 0; s < spec.scenes; ++s) {
    std::mt19937_64 scene_rng(sub_seed(spec.seed, "dataset.scene", s));
    const auto prims = make_scene(spec, scene_rng);
    const Position center{static_cast<double>(s / side) * spec.spacing, static_cast<double>(s % side) * spec.spacing};
    for (std::size_t c = 0; c < spec.copies; ++c) {
      std::mt19937_64 copy_rng(sub_seed(spec.seed, "dataset.copy", s * 1000003ULL + c));
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      std::uniform_real_distribution<double> radius(0.0, 1.0);
      const double a = angle(copy_rng);
      const double r = spec.copy_offset * std::sqrt(radius(copy_rng));
      SyntheticCloud sc;
      sc.scene = s;
      sc.copy = c;
      sc.id = "scene" + std::to_string(s) + "_copy" + std::to_string(c);
      sc.position = {center.northing + r * std::cos(a), center.easting + r * std::sin(a)};
      sc.cloud = sample_scene(prims, spec, copy_rng);
      sc.split = (spec.copies > 1 && c + 1 == spec.copies) ? "test" : "train";
      out.push_back(std::move(sc));
    }
  }
  return out;
}

std::vector<IndexRow> gen_synth(const SyntheticSceneSpec& spec, const std::filesystem::path& out_dir, bool force) {
  spec.validate();
  namespace fs = std::filesystem;
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) throw std::runtime_error("output directory " + out_dir.string() + " is not empty (use --force)");
    fs::remove_all(out_dir);
  }
  fs::create_directories(out_dir / "clouds");
  std::vector<IndexRow> rows;
  for (const SyntheticCloud& sc : generate_scenes(spec)) {
    const fs::path rel = fs::path("clouds") / (sc.id + ".bin");
    write_point_cloud_bin(out_dir / rel, sc.cloud);
    rows.push_back({rel, sc.position.northing, sc.position.easting, sc.split, std::to_string(sc.copy)});
  }
  write_index(out_dir / "index.csv", rows);
  for (auto& r : rows) r.path = out_dir / r.path;
  return rows;
}

std::vector<TrainSample> to_train_samples(const std::vector<SyntheticCloud>& clouds, const std::string& split) {
  std::vector<TrainSample> samples;
  for (const SyntheticCloud& sc : clouds) {
    if (split.empty() || sc.split == split) samples.push_back({sc.id, sc.cloud, sc.position});
  }
  return samples;
}

}  // namespace svtnet
