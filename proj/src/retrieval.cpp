// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace svtnet {
namespace {

// Ranks the whole database for one query: ascending distance, then index.
std::vector<Neighbor> rank_all(const DescriptorDB& db, const Vector& q) {
  std::vector<Neighbor> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    const double d = (db.descriptors.row(static_cast<Eigen::Index>(i)).transpose() - q).norm();
    all[i] = {i, d};
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  });
  return all;
}

// Rank (0-based) of the first true match, or nullopt-equivalent SIZE_MAX.
std::size_t first_hit(const DescriptorDB& db, const Vector& q, const Position& pos, double radius) {
  const auto ranking = rank_all(db, q);
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (planar_distance(db.positions[ranking[r].index], pos) <= radius) return r;
  }
  return SIZE_MAX;
}

bool has_true_match(const DescriptorDB& db, const Position& pos, double radius) {
  return std::any_of(db.positions.begin(), db.positions.end(),
                     [&](const Position& p) { return planar_distance(p, pos) <= radius; });
}

}  // namespace

double planar_distance(const Position& a, const Position& b) {
  return std::hypot(a.northing - b.northing, a.easting - b.easting);
}

void DescriptorDB::validate() const {
  if (static_cast<std::size_t>(descriptors.rows()) != positions.size() || ids.size() != positions.size())
    throw std::invalid_argument("descriptor db: row counts disagree");
  if (!descriptors.allFinite()) throw std::invalid_argument("descriptor db: non-finite descriptor");
}

std::vector<Neighbor> knn(const DescriptorDB& db, const Vector& query, std::size_t k) {
  if (db.size() == 0) throw std::invalid_argument("knn: empty database");
  if (k < 1 || k > db.size()) throw std::invalid_argument("knn: k must be in [1, M]");
  if (query.size() != db.descriptors.cols()) throw std::invalid_argument("knn: query dimension mismatch");
  auto ranking = rank_all(db, query);
  ranking.resize(k);
  return ranking;
}

RecallResult recall_at_n(const DescriptorDB& db, const DescriptorDB& queries, std::size_t n,
                         const EvalProtocol& protocol) {
  if (n < 1) throw std::invalid_argument("recall_at_n: n must be >= 1");
  const auto curve = recall_curve(db, queries, n, protocol);
  RecallResult r;
  r.recall = curve.back();
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (has_true_match(db, queries.positions[q], protocol.match_radius)) {
      ++r.evaluated;
    } else {
      ++r.excluded;
    }
  }
  return r;
}

std::size_t one_percent_n(std::size_t db_size) {
  // round-half-up of M / 100 in integer arithmetic
  return std::max<std::size_t>(1, (db_size + 50) / 100);
}

RecallResult recall_at_one_percent(const DescriptorDB& db, const DescriptorDB& queries,
                                   const EvalProtocol& protocol) {
  return recall_at_n(db, queries, one_percent_n(db.size()), protocol);
}

std::vector<double> recall_curve(const DescriptorDB& db, const DescriptorDB& queries, std::size_t max_n,
                                 const EvalProtocol& protocol) {
  if (max_n < 1) throw std::invalid_argument("recall_at_n: n must be >= 1");
  if (!(protocol.match_radius > 0.0)) throw std::invalid_argument("match radius must be > 0");
  if (db.size() == 0) throw std::invalid_argument("recall: empty database");
  if (queries.descriptors.cols() != db.descriptors.cols())
    throw std::invalid_argument("recall: query dimension mismatch");

  std::vector<std::size_t> hits(max_n, 0);
  std::size_t evaluated = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const Position& pos = queries.positions[q];
    if (!has_true_match(db, pos, protocol.match_radius)) continue;
    ++evaluated;
    const std::size_t rank = first_hit(db, queries.descriptors.row(static_cast<Eigen::Index>(q)).transpose(), pos,
                                       protocol.match_radius);
    for (std::size_t n = rank; n < max_n; ++n) ++hits[n];
  }
  std::vector<double> curve(max_n, 0.0);
  if (evaluated == 0) return curve;
  for (std::size_t n = 0; n < max_n; ++n) curve[n] = static_cast<double>(hits[n]) / static_cast<double>(evaluated);
  return curve;
}

void write_descriptor_csv(const std::filesystem::path& path, const DescriptorDB& db) {
  db.validate();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "id,northing,easting";
  for (int f = 0; f < db.dim(); ++f) os << ",f" << f;
  os << '\n';
  os << std::setprecision(17);
  for (std::size_t i = 0; i < db.size(); ++i) {
    os << db.ids[i] << ',' << db.positions[i].northing << ',' << db.positions[i].easting;
    for (int f = 0; f < db.dim(); ++f) os << ',' << db.descriptors(static_cast<Eigen::Index>(i), f);
    os << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

DescriptorDB read_descriptor_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path.string() + ": missing header");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 4 || line.rfind("id,northing,easting,f0", 0) != 0)
    throw std::runtime_error(path.string() + ": expected header id,northing,easting,f0..");
  const std::size_t dim = columns - 3;

  DescriptorDB db;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    try {
      db.ids.push_back(cells[0]);
      db.positions.push_back({std::stod(cells[1]), std::stod(cells[2])});
      for (std::size_t f = 0; f < dim; ++f) values.push_back(std::stod(cells[3 + f]));
    } catch (const std::logic_error&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad number");
    }
  }
  db.descriptors = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(db.ids.size()),
                                            static_cast<Eigen::Index>(dim));
  db.validate();
  return db;
}

DatasetMetrics evaluate_dataset(const std::string& tag, const DescriptorDB& db, const DescriptorDB& queries,
                                std::size_t max_n, const EvalProtocol& protocol) {
  db.validate();
  queries.validate();
  DatasetMetrics m;
  m.tag = tag;
  m.one_percent_n = one_percent_n(db.size());
  m.curve = recall_curve(db, queries, std::max({max_n, m.one_percent_n, std::size_t{1}}), protocol);
  m.recall_at_1 = m.curve[0];
  m.recall_at_one_percent = m.curve[m.one_percent_n - 1];
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (has_true_match(db, queries.positions[q], protocol.match_radius)) {
      ++m.evaluated;
    } else {
      ++m.excluded;
    }
  }
  m.curve.resize(std::max<std::size_t>(max_n, 1));
  return m;
}

void write_recall_curve_csv(const std::filesystem::path& path, const std::vector<DatasetMetrics>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "dataset,n,recall\n" << std::setprecision(17);
  for (const DatasetMetrics& m : rows) {
    for (std::size_t n = 0; n < m.curve.size(); ++n) os << m.tag << ',' << n + 1 << ',' << m.curve[n] << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<DatasetMetrics>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "dataset,ar1_percent,ar1,one_percent_n,evaluated,excluded\n" << std::fixed << std::setprecision(2);
  for (const DatasetMetrics& m : rows) {
    os << m.tag << ',' << 100.0 * m.recall_at_one_percent << ',' << 100.0 * m.recall_at_1 << ','
       << m.one_percent_n << ',' << m.evaluated << ',' << m.excluded << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string format_recall_table(const std::vector<DatasetMetrics>& rows) {
  std::size_t width = 8;
  for (const DatasetMetrics& m : rows) width = std::max(width, m.tag.size() + 2);
  std::ostringstream os;
  os << std::left << std::setw(8) << "metric";
  for (const DatasetMetrics& m : rows) os << std::right << std::setw(static_cast<int>(width)) << m.tag;
  os << '\n' << std::fixed << std::setprecision(2);
  os << std::left << std::setw(8) << "AR@1%";
  for (const DatasetMetrics& m : rows) os << std::right << std::setw(static_cast<int>(width)) << 100.0 * m.recall_at_one_percent;
  os << '\n' << std::left << std::setw(8) << "AR@1";
  for (const DatasetMetrics& m : rows) os << std::right << std::setw(static_cast<int>(width)) << 100.0 * m.recall_at_1;
  os << '\n';
  return os.str();
}

}  // namespace svtnet
