// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svtnet/io.hpp"
#include "svtnet/retrieval.hpp"
#include "svtnet/training.hpp"

namespace svtnet {

/// Desk-scale stand-in for a place-recognition benchmark: each scene is a
/// handful of boxes, cylinders and walls on a ground patch, observed several
/// times at nearly the same place.
struct SyntheticSceneSpec {
  std::uint64_t seed = 0;
  std::size_t scenes = 30;
  std::size_t copies = 3;
  std::size_t points = 4096;
  int min_primitives = 3;
  int max_primitives = 6;
  double spacing = 60.0;       // meters between scene centers
  double copy_offset = 3.0;    // max planar offset of a copy from its scene, meters
  double copy_jitter = 0.003;  // per-point Gaussian noise on each copy, normalized units
  double copy_shift = 0.0;     // max rigid shift of each copy, normalized units
  double min_half_extent = 0.03;  // primitive half size, normalized units
  double max_half_extent = 0.09;
  double ground_fraction = 0.0;   // share of points on a 2 x 2 ground patch

  void validate() const;
};

struct SyntheticCloud {
  std::string id;
  std::size_t scene = 0;
  std::size_t copy = 0;
  Position position;
  PointCloud cloud;
  std::string split;  // the last copy of each scene is "test"
};

std::vector<SyntheticCloud> generate_scenes(const SyntheticSceneSpec& spec);

/// Writes clouds/<id>.bin and index.csv under `out_dir`; refuses a non-empty
/// directory unless `force`.
std::vector<IndexRow> gen_synth(const SyntheticSceneSpec& spec, const std::filesystem::path& out_dir,
                                bool force = false);

std::vector<TrainSample> to_train_samples(const std::vector<SyntheticCloud>& clouds, const std::string& split);

}  // namespace svtnet
