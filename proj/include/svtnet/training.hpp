// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "svtnet/model.hpp"
#include "svtnet/retrieval.hpp"

namespace svtnet {

struct TrainSample {
  std::string id;
  PointCloud cloud;
  Position position;
};

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// In-batch match masks. The diagonal is never set.
struct PairLabels {
  BoolMatrix positives;
  BoolMatrix negatives;

  std::size_t size() const { return static_cast<std::size_t>(positives.rows()); }
};

PairLabels make_pair_labels(const std::vector<Position>& positions, double positive_radius = 10.0,
                            double negative_radius = 50.0);

struct HardTriplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  double positive_distance = 0.0;
  double negative_distance = 0.0;
};

/// Farthest positive and nearest negative for every anchor that has both;
/// ties go to the lowest index.
std::vector<HardTriplet> mine_batch_hard(const Matrix& descriptors, const PairLabels& labels);

enum class LossReduction { kMean, kSum };

struct TripletLoss {
  NodeId loss = 0;
  std::size_t active = 0;  // anchors with strictly positive hinge
  std::size_t anchors = 0;
  std::vector<HardTriplet> triplets;
};

/// max(d(a, p) - d(a, n) + margin, 0) over the mined triplets, reduced over
/// valid anchors.
TripletLoss triplet_loss_batch_hard(Tape& tape, NodeId descriptors, const PairLabels& labels, double margin,
                                    LossReduction reduction = LossReduction::kMean);

struct BatchSizer {
  std::size_t size = 32;
  std::size_t max_size = 256;
  double growth = 1.4;
  double threshold = 0.7;

  /// Grows the batch to min(max, floor(growth * size)) when active triplets
  /// fall below threshold * size. Called once per epoch with the mean
  /// active count per batch.
  std::size_t update(double active);
};

struct AugmentConfig {
  double jitter_prob = 1.0;
  double jitter_sigma = 0.001;
  double jitter_clip = 0.002;
  double translate_prob = 1.0;
  double translate_range = 0.01;
  double removal_prob = 0.5;
  double removal_max_fraction = 0.1;
  double erase_prob = 0.5;
  double erase_max_fraction = 0.1;

  static AugmentConfig disabled();
};

PointCloud augment(const PointCloud& points, std::mt19937_64& rng, const AugmentConfig& config);

struct LrSchedule {
  double initial = 1e-3;
  std::vector<int> milestones{30};  // zero-based epoch index at which lr is multiplied by gamma
  double gamma = 0.1;

  double at(int epoch) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of every parameter that has a gradient.
void adam_step(ParamSet& params, const std::map<std::string, Matrix>& grads, OptimState& state, double lr,
               const AdamConfig& config = {});

struct TrainConfig {
  ModelConfig model;
  LrSchedule schedule;
  AdamConfig adam;
  int epochs = 40;
  std::int64_t max_iterations = -1;  // < 0: no cap
  double margin = 0.2;
  LossReduction reduction = LossReduction::kMean;
  std::size_t batch_init = 32;
  std::size_t batch_max = 256;
  double batch_growth = 1.4;
  double batch_threshold = 0.7;
  double positive_radius = 10.0;
  double negative_radius = 50.0;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty: no per-epoch checkpoints

  /// Baseline protocol: 40 epochs, batch 32, decay at epoch 30.
  static TrainConfig baseline();
  /// Refined protocol: 80 epochs, batch 16, decay at epoch 60.
  static TrainConfig refined();
};

/// key = value text, '#' comments; unknown keys are errors.
TrainConfig read_train_config(const std::filesystem::path& path);
void apply_train_setting(TrainConfig& config, const std::string& key, const std::string& value);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double active_fraction = 0.0;
  std::size_t batch_size = 0;
  double lr = 0.0;
  std::int64_t iterations = 0;
};

void write_epoch_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

struct TrainResult {
  SvtNet net;
  std::vector<EpochLog> log;
  std::int64_t iterations = 0;
};

using IterationCallback = std::function<void(std::int64_t iteration, double loss, std::size_t active,
                                             std::size_t batch_size)>;

TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& config,
                  const IterationCallback& on_iteration = {});

}  // namespace svtnet
