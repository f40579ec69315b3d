// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "svtnet/log.hpp"

namespace svtnet {

PairLabels make_pair_labels(const std::vector<Position>& positions, double positive_radius,
                            double negative_radius) {
  const auto n = static_cast<Eigen::Index>(positions.size());
  PairLabels labels{BoolMatrix::Constant(n, n, false), BoolMatrix::Constant(n, n, false)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = planar_distance(positions[static_cast<std::size_t>(i)], positions[static_cast<std::size_t>(j)]);
      labels.positives(i, j) = d <= positive_radius;
      labels.negatives(i, j) = d >= negative_radius;
    }
  }
  return labels;
}

std::vector<HardTriplet> mine_batch_hard(const Matrix& descriptors, const PairLabels& labels) {
  const Eigen::Index b = descriptors.rows();
  if (labels.positives.rows() != b || labels.negatives.rows() != b)
    throw std::invalid_argument("mine_batch_hard: label size mismatch");
  std::vector<HardTriplet> out;
  for (Eigen::Index a = 0; a < b; ++a) {
    HardTriplet t;
    t.anchor = static_cast<std::size_t>(a);
    bool has_pos = false;
    bool has_neg = false;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == a) continue;
      const bool pos = labels.positives(a, j);
      const bool neg = labels.negatives(a, j);
      if (!pos && !neg) continue;
      const double d = (descriptors.row(a) - descriptors.row(j)).norm();
      if (pos && (!has_pos || d > t.positive_distance)) {
        t.positive = static_cast<std::size_t>(j);
        t.positive_distance = d;
        has_pos = true;
      }
      if (neg && (!has_neg || d < t.negative_distance)) {
        t.negative = static_cast<std::size_t>(j);
        t.negative_distance = d;
        has_neg = true;
      }
    }
    if (has_pos && has_neg) out.push_back(t);
  }
  return out;
}

TripletLoss triplet_loss_batch_hard(Tape& tape, NodeId descriptors, const PairLabels& labels, double margin,
                                    LossReduction reduction) {
  const Matrix& desc = tape.value(descriptors);
  if (desc.rows() < 2) throw std::invalid_argument("triplet loss needs a batch of at least 2");
  TripletLoss result;
  result.triplets = mine_batch_hard(desc, labels);
  if (result.triplets.empty()) throw std::invalid_argument("degenerate batch");

  std::vector<std::int32_t> anchors;
  std::vector<std::int32_t> positives;
  std::vector<std::int32_t> negatives;
  for (const HardTriplet& t : result.triplets) {
    anchors.push_back(static_cast<std::int32_t>(t.anchor));
    positives.push_back(static_cast<std::int32_t>(t.positive));
    negatives.push_back(static_cast<std::int32_t>(t.negative));
  }
  const auto count = static_cast<Eigen::Index>(anchors.size());
  const NodeId ones = tape.constant(Matrix::Ones(desc.cols(), 1));

  auto distance = [&](std::vector<std::int32_t> other) {
    const NodeId diff = tape.sub(tape.gather_rows(descriptors, anchors), tape.gather_rows(descriptors, std::move(other)));
    const NodeId sq = tape.matmul(tape.mul(diff, diff), ones);
    // The clamp keeps the sqrt derivative finite for coincident descriptors.
    return tape.power(tape.clamp_min(sq, 1e-24), tape.constant(Matrix::Constant(1, 1, 0.5)));
  };
  const NodeId dp = distance(std::move(positives));
  const NodeId dn = distance(std::move(negatives));
  const NodeId hinge =
      tape.relu(tape.add(tape.sub(dp, dn), tape.constant(Matrix::Constant(count, 1, margin))));
  const Matrix& h = tape.value(hinge);
  result.active = static_cast<std::size_t>((h.array() > 0.0).count());
  result.anchors = static_cast<std::size_t>(count);
  result.loss = reduction == LossReduction::kMean ? tape.reduce_mean_rows(hinge) : tape.sum(hinge);
  return result;
}

std::size_t BatchSizer::update(double active) {
  // The tolerance keeps products such as 1.4 * 85 and 0.7 * 10 on the exact
  // side of floor and of the threshold.
  constexpr double kTol = 1e-9;
  if (active < threshold * static_cast<double>(size) - kTol) {
    const auto grown = static_cast<std::size_t>(std::floor(growth * static_cast<double>(size) + kTol));
    size = std::min(max_size, std::max(size, grown));
  }
  return size;
}

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig c;
  c.jitter_prob = 0.0;
  c.translate_prob = 0.0;
  c.removal_prob = 0.0;
  c.erase_prob = 0.0;
  return c;
}

PointCloud augment(const PointCloud& points, std::mt19937_64& rng, const AugmentConfig& config) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Every branch draws its coin even when disabled so streams stay aligned.
  const bool do_jitter = unit(rng) < config.jitter_prob;
  const bool do_translate = unit(rng) < config.translate_prob;
  const bool do_remove = unit(rng) < config.removal_prob;
  const bool do_erase = unit(rng) < config.erase_prob;

  PointCloud out = points;
  if (do_jitter) {
    std::normal_distribution<double> noise(0.0, config.jitter_sigma);
    auto draw = [&] { return std::clamp(noise(rng), -config.jitter_clip, config.jitter_clip); };
    for (Point& p : out) {
      p.x += draw();
      p.y += draw();
      p.z += draw();
    }
  }
  if (do_translate) {
    std::uniform_real_distribution<double> shift(-config.translate_range, config.translate_range);
    const double tx = shift(rng);
    const double ty = shift(rng);
    const double tz = shift(rng);
    for (Point& p : out) {
      p.x += tx;
      p.y += ty;
      p.z += tz;
    }
  }
  if (do_remove && out.size() > 1) {
    const double fraction = unit(rng) * config.removal_max_fraction;
    const auto drop = std::min(out.size() - 1, static_cast<std::size_t>(fraction * static_cast<double>(out.size())));
    std::vector<std::size_t> idx(out.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    // Partial Fisher-Yates: the first `drop` entries are removed.
    for (std::size_t i = 0; i < drop; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<bool> keep(out.size(), true);
    for (std::size_t i = 0; i < drop; ++i) keep[idx[i]] = false;
    PointCloud kept;
    kept.reserve(out.size() - drop);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (keep[i]) kept.push_back(out[i]);
    }
    out = std::move(kept);
  }
  if (do_erase && out.size() > 1) {
    Point lo = out[0];
    Point hi = out[0];
    for (const Point& p : out) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    // Cuboid volume is at most erase_max_fraction of the bounding box.
    const double side = std::cbrt(unit(rng) * config.erase_max_fraction);
    std::uniform_int_distribution<std::size_t> pick(0, out.size() - 1);
    const Point c = out[pick(rng)];
    const double hx = 0.5 * side * (hi.x - lo.x);
    const double hy = 0.5 * side * (hi.y - lo.y);
    const double hz = 0.5 * side * (hi.z - lo.z);
    PointCloud kept;
    kept.reserve(out.size());
    for (const Point& p : out) {
      const bool inside = std::abs(p.x - c.x) <= hx && std::abs(p.y - c.y) <= hy && std::abs(p.z - c.z) <= hz;
      if (!inside) kept.push_back(p);
    }
    if (!kept.empty()) out = std::move(kept);
  }
  return out;
}

double LrSchedule::at(int epoch) const {
  double lr = initial;
  for (int m : milestones) {
    if (epoch >= m) lr *= gamma;
  }
  return lr;
}

void adam_step(ParamSet& params, const std::map<std::string, Matrix>& grads, OptimState& state, double lr,
               const AdamConfig& config) {
  for (const auto& [name, g] : grads) {
    const Matrix& p = params.param(name);
    if (g.rows() != p.rows() || g.cols() != p.cols()) throw std::invalid_argument("adam: gradient shape mismatch for " + name);
    if (!g.allFinite()) throw std::runtime_error("non-finite gradient for parameter " + name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& [name, g] : grads) {
    Matrix& p = params.param(name);
    auto [mit, m_new] = state.m.try_emplace(name, Matrix::Zero(p.rows(), p.cols()));
    auto [vit, v_new] = state.v.try_emplace(name, Matrix::Zero(p.rows(), p.cols()));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.eps);
  }
}

TrainConfig TrainConfig::baseline() { return TrainConfig{}; }

TrainConfig TrainConfig::refined() {
  TrainConfig c;
  c.epochs = 80;
  c.batch_init = 16;
  c.schedule.milestones = {60};
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

}  // namespace

void apply_train_setting(TrainConfig& c, const std::string& key, const std::string& value) {
  auto num = [&] { return std::stod(value); };
  auto integer = [&] { return std::stoll(value); };
  if (key == "variant") c.model.variant = parse_variant(value);
  else if (key == "d") c.model.descriptor_dim = static_cast<int>(integer());
  else if (key == "L_t") c.model.tokens = static_cast<int>(integer());
  else if (key == "r") c.model.reduction = static_cast<int>(integer());
  else if (key == "quant_step") c.model.quant_step = num();
  else if (key == "fusion") c.model.fusion = parse_fusion(value);
  else if (key == "token_axis") {
    if (value == "token") c.model.token_axis = SoftmaxAxis::kToken;
    else if (value == "voxel") c.model.token_axis = SoftmaxAxis::kVoxel;
    else throw std::invalid_argument("token_axis must be token or voxel");
  } else if (key == "schedule") {
    TrainConfig preset;
    if (value == "baseline") preset = TrainConfig::baseline();
    else if (value == "refined") preset = TrainConfig::refined();
    else throw std::invalid_argument("schedule must be baseline or refined");
    c.epochs = preset.epochs;
    c.batch_init = preset.batch_init;
    c.schedule.milestones = preset.schedule.milestones;
  } else if (key == "lr") c.schedule.initial = num();
  else if (key == "lr_gamma") c.schedule.gamma = num();
  else if (key == "milestones") {
    c.schedule.milestones.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!trim(item).empty()) c.schedule.milestones.push_back(std::stoi(trim(item)));
    }
  } else if (key == "epochs") c.epochs = static_cast<int>(integer());
  else if (key == "max_iterations") c.max_iterations = integer();
  else if (key == "margin") c.margin = num();
  else if (key == "loss_reduction") {
    if (value == "mean") c.reduction = LossReduction::kMean;
    else if (value == "sum") c.reduction = LossReduction::kSum;
    else throw std::invalid_argument("loss_reduction must be mean or sum");
  } else if (key == "batch_init") c.batch_init = static_cast<std::size_t>(integer());
  else if (key == "batch_max") c.batch_max = static_cast<std::size_t>(integer());
  else if (key == "batch_growth") c.batch_growth = num();
  else if (key == "batch_threshold") c.batch_threshold = num();
  else if (key == "positive_radius") c.positive_radius = num();
  else if (key == "negative_radius") c.negative_radius = num();
  else if (key == "augment") {
    if (!parse_bool(value)) c.augment = AugmentConfig::disabled();
  } else if (key == "jitter_prob") c.augment.jitter_prob = num();
  else if (key == "jitter_sigma") c.augment.jitter_sigma = num();
  else if (key == "jitter_clip") c.augment.jitter_clip = num();
  else if (key == "translate_prob") c.augment.translate_prob = num();
  else if (key == "translate_range") c.augment.translate_range = num();
  else if (key == "removal_prob") c.augment.removal_prob = num();
  else if (key == "removal_max_fraction") c.augment.removal_max_fraction = num();
  else if (key == "erase_prob") c.augment.erase_prob = num();
  else if (key == "erase_max_fraction") c.augment.erase_max_fraction = num();
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "checkpoint_dir") c.checkpoint_dir = value;
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

TrainConfig read_train_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  TrainConfig c;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      apply_train_setting(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::logic_error& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

void write_epoch_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "epoch,loss,active_fraction,batch_size,lr\n" << std::setprecision(10);
  for (const EpochLog& e : log)
    os << e.epoch << ',' << e.loss << ',' << e.active_fraction << ',' << e.batch_size << ',' << e.lr << '\n';
}

TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& config,
                  const IterationCallback& on_iteration) {
  config.model.validate();
  if (dataset.size() < 2) throw std::invalid_argument("training needs at least two samples");

  const std::size_t n = dataset.size();
  std::vector<std::vector<std::size_t>> positives(n);
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && planar_distance(dataset[i].position, dataset[j].position) <= config.positive_radius)
        positives[i].push_back(j);
    }
    if (!positives[i].empty()) anchors.push_back(i);
  }
  if (anchors.empty()) throw std::invalid_argument("dataset has no positive pairs");

  TrainResult result{SvtNet::build(config.model, config.seed), {}, 0};
  SvtNet& net = result.net;
  OptimState optim;
  BatchSizer sizer{config.batch_init, config.batch_max, config.batch_growth, config.batch_threshold};
  std::mt19937_64 batch_rng(sub_seed(config.seed, "batch"));

  if (!config.checkpoint_dir.empty()) std::filesystem::create_directories(config.checkpoint_dir);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.max_iterations >= 0 && result.iterations >= config.max_iterations) break;
    const double lr = config.schedule.at(epoch);
    std::vector<std::size_t> order = anchors;
    std::shuffle(order.begin(), order.end(), batch_rng);

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    double loss_sum = 0.0;
    double active_sum = 0.0;
    double active_count_sum = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      if (config.max_iterations >= 0 && result.iterations >= config.max_iterations) break;
      const std::size_t target = std::min(sizer.size, n);
      std::vector<std::size_t> batch;
      std::unordered_set<std::size_t> in_batch;
      while (batch.size() < target && cursor < order.size()) {
        const std::size_t a = order[cursor++];
        if (in_batch.count(a) != 0) continue;
        batch.push_back(a);
        in_batch.insert(a);
        if (batch.size() >= target) break;
        std::vector<std::size_t> free;
        for (std::size_t p : positives[a]) {
          if (in_batch.count(p) == 0) free.push_back(p);
        }
        if (!free.empty()) {
          std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
          const std::size_t p = free[pick(batch_rng)];
          batch.push_back(p);
          in_batch.insert(p);
        }
      }
      if (batch.size() < 2) break;

      std::vector<VoxelPyramid> pyramids;
      std::vector<Position> positions;
      pyramids.reserve(batch.size());
      for (std::size_t idx : batch) {
        std::mt19937_64 aug_rng(
            sub_seed(config.seed, "augment", static_cast<std::uint64_t>(result.iterations) * n + idx));
        pyramids.push_back(build_pyramid(augment(dataset[idx].cloud, aug_rng, config.augment), config.model.quant_step));
        positions.push_back(dataset[idx].position);
      }
      std::vector<const VoxelPyramid*> ptrs;
      for (const auto& p : pyramids) ptrs.push_back(&p);

      Tape tape;
      Graph graph(tape, net.params, Mode::kTrain);
      const ForwardResult fwd = net.forward(graph, ptrs);
      const PairLabels labels = make_pair_labels(positions, config.positive_radius, config.negative_radius);
      TripletLoss loss;
      try {
        loss = triplet_loss_batch_hard(tape, fwd.descriptors, labels, config.margin, config.reduction);
      } catch (const std::invalid_argument& e) {
        spdlog::debug("skipping batch: {}", e.what());
        continue;
      }
      const Gradients grads = tape.backward(loss.loss);
      adam_step(net.params, graph.param_grads(grads), optim, lr, config.adam);
      update_running_stats(net.params, graph.batch_stats(), kNormMomentum);

      const double loss_value = tape.value(loss.loss)(0, 0);
      ++result.iterations;
      ++entry.iterations;
      loss_sum += loss_value;
      active_sum += static_cast<double>(loss.active) / static_cast<double>(batch.size());
      const std::size_t used = batch.size();
      active_count_sum += static_cast<double>(loss.active);
      if (on_iteration) on_iteration(result.iterations, loss_value, loss.active, used);
      spdlog::debug("iter {} loss {:.6f} active {}/{}", result.iterations, loss_value, loss.active, used);
    }
    if (entry.iterations == 0) break;
    entry.loss = loss_sum / static_cast<double>(entry.iterations);
    entry.active_fraction = active_sum / static_cast<double>(entry.iterations);
    entry.batch_size = sizer.size;
    sizer.update(active_count_sum / static_cast<double>(entry.iterations));
    result.log.push_back(entry);
    spdlog::info("epoch {} loss {:.6f} active {:.3f} batch {} lr {}", epoch, entry.loss, entry.active_fraction,
                 entry.batch_size, entry.lr);
    if (!config.checkpoint_dir.empty()) {
      std::ostringstream name;
      name << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
      net.save(config.checkpoint_dir / name.str());
    }
  }
  return result;
}

}  // namespace svtnet
