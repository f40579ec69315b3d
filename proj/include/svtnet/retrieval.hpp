// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "svtnet/common.hpp"

namespace svtnet {

struct Position {
  double northing = 0.0;
  double easting = 0.0;
};

double planar_distance(const Position& a, const Position& b);

/// Global descriptors with their planar ground-truth positions.
struct DescriptorDB {
  Matrix descriptors;  // M x d
  std::vector<Position> positions;
  std::vector<std::string> ids;

  std::size_t size() const { return positions.size(); }
  int dim() const { return static_cast<int>(descriptors.cols()); }
  void validate() const;
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Exact k nearest rows by Euclidean distance; ties go to the lower index.
std::vector<Neighbor> knn(const DescriptorDB& db, const Vector& query, std::size_t k);

struct EvalProtocol {
  double match_radius = 25.0;
};

struct RecallResult {
  double recall = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // queries with no true match in the database
};

/// Fraction of queries (with at least one true match) whose top-n list holds a
/// database entry within the match radius.
RecallResult recall_at_n(const DescriptorDB& db, const DescriptorDB& queries, std::size_t n,
                         const EvalProtocol& protocol = {});

/// max(1, round-half-up(M / 100)).
std::size_t one_percent_n(std::size_t db_size);

RecallResult recall_at_one_percent(const DescriptorDB& db, const DescriptorDB& queries,
                                   const EvalProtocol& protocol = {});

/// recall_at_n for n = 1..max_n from a single ranking pass.
std::vector<double> recall_curve(const DescriptorDB& db, const DescriptorDB& queries, std::size_t max_n,
                                 const EvalProtocol& protocol = {});

/// One dataset's row of the benchmark table.
struct DatasetMetrics {
  std::string tag;
  double recall_at_1 = 0.0;
  double recall_at_one_percent = 0.0;
  std::size_t one_percent_n = 1;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
  std::vector<double> curve;  // recall@n for n = 1..curve.size()
};

/// Recall@1, recall@1% and the curve up to max(max_n, 1% n); queries are
/// averaged uniformly.
DatasetMetrics evaluate_dataset(const std::string& tag, const DescriptorDB& db, const DescriptorDB& queries,
                                std::size_t max_n = 25, const EvalProtocol& protocol = {});

/// CSV `dataset,n,recall`.
void write_recall_curve_csv(const std::filesystem::path& path, const std::vector<DatasetMetrics>& rows);
/// CSV `dataset,ar1_percent,ar1,one_percent_n,evaluated,excluded`, recalls in percent.
void write_summary_csv(const std::filesystem::path& path, const std::vector<DatasetMetrics>& rows);
/// Fixed-width table with one column per dataset and rows AR@1% and AR@1, in percent.
std::string format_recall_table(const std::vector<DatasetMetrics>& rows);

/// CSV with header `id,northing,easting,f0..f{d-1}`.
void write_descriptor_csv(const std::filesystem::path& path, const DescriptorDB& db);
DescriptorDB read_descriptor_csv(const std::filesystem::path& path);

}  // namespace svtnet
