// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace svtnet {

static_assert(std::endian::native == std::endian::little, "point-cloud I/O assumes a little-endian host");

PointCloud read_point_cloud_bin(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const auto bytes = std::filesystem::file_size(path);
  constexpr std::uintmax_t kRecord = 3 * sizeof(double);
  if (bytes % kRecord != 0) throw std::runtime_error(path.string() + ": size is not a multiple of 24 bytes");
  PointCloud pc(static_cast<std::size_t>(bytes / kRecord));
  static_assert(sizeof(Point) == kRecord);
  is.read(reinterpret_cast<char*>(pc.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::uintmax_t>(is.gcount()) != bytes) throw std::runtime_error(path.string() + ": short read");
  return pc;
}

void write_point_cloud_bin(const std::filesystem::path& path, const PointCloud& pc) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(pc.data()), static_cast<std::streamsize>(pc.size() * sizeof(Point)));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

PointCloud read_point_cloud_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  PointCloud pc;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Point p;
    if (!(ss >> p.x >> p.y >> p.z))
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 'x y z'");
    pc.push_back(p);
  }
  return pc;
}

void write_point_cloud_text(const std::filesystem::path& path, const PointCloud& pc) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << std::setprecision(17);
  for (const Point& p : pc) os << p.x << ' ' << p.y << ' ' << p.z << '\n';
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
  return path.extension() == ".bin" ? read_point_cloud_bin(path) : read_point_cloud_text(path);
}

std::vector<IndexRow> read_index(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open index " + path.string());
  const auto base = path.parent_path();
  std::string line;
  if (!std::getline(is, line) || line.rfind("path,northing,easting,split,run", 0) != 0)
    throw std::runtime_error(path.string() + ": expected header path,northing,easting,split,run");
  std::vector<IndexRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != 5) throw std::runtime_error(where + ": expected 5 columns");
    IndexRow row;
    row.path = cells[0];
    if (row.path.is_relative()) row.path = base / row.path;
    try {
      row.northing = std::stod(cells[1]);
      row.easting = std::stod(cells[2]);
    } catch (const std::logic_error&) {
      throw std::runtime_error(where + ": bad position");
    }
    if (!std::isfinite(row.northing) || !std::isfinite(row.easting)) throw std::runtime_error(where + ": bad position");
    row.split = cells[3];
    row.run = cells[4];
    if (!std::filesystem::exists(row.path)) throw std::runtime_error(where + ": missing file " + row.path.string());
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_index(const std::filesystem::path& path, const std::vector<IndexRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const auto base = path.parent_path();
  os << "path,northing,easting,split,run\n" << std::setprecision(17);
  for (const IndexRow& r : rows) {
    std::filesystem::path p = r.path;
    if (p.is_absolute()) p = p.lexically_relative(std::filesystem::absolute(base));
    os << p.generic_string() << ',' << r.northing << ',' << r.easting << ',' << r.split << ',' << r.run << '\n';
  }
}

}  // namespace svtnet
