// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "svtnet/sparse_tensor.hpp"

namespace svtnet {

/// Raw little-endian float64 (x, y, z) records; the point count is the file
/// size divided by 24.
PointCloud read_point_cloud_bin(const std::filesystem::path& path);
void write_point_cloud_bin(const std::filesystem::path& path, const PointCloud& pc);

/// One "x y z" triple per line.
PointCloud read_point_cloud_text(const std::filesystem::path& path);
void write_point_cloud_text(const std::filesystem::path& path, const PointCloud& pc);

/// Dispatches on extension: ".bin" is binary, anything else is text.
PointCloud read_point_cloud(const std::filesystem::path& path);

struct IndexRow {
  std::filesystem::path path;  // resolved against the index directory
  double northing = 0.0;
  double easting = 0.0;
  std::string split;  // train | test
  std::string run;
};

/// CSV `path,northing,easting,split,run`. Relative paths are resolved against
/// the directory holding the index; every path must exist.
std::vector<IndexRow> read_index(const std::filesystem::path& path);
/// Absolute paths are written relative to the index directory, relative ones as given.
void write_index(const std::filesystem::path& path, const std::vector<IndexRow>& rows);

}  // namespace svtnet
