// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/asvt.hpp"

#include <stdexcept>

namespace svtnet {

ASVTParams ASVTParams::make(const std::string& name, int channels, int reduction) {
  if (channels < 1 || reduction < 1 || channels % reduction != 0)
    throw std::invalid_argument(name + ": reduction must divide the channel count");
  ASVTParams a;
  a.name = name;
  a.channels = channels;
  a.reduction = reduction;
  const int cr = channels / reduction;
  a.conv_v = {name + ".conv_v", 1, 1, channels, channels, true};
  a.conv_q = {name + ".conv_q", 1, 1, channels, cr, true};
  a.conv_k = {name + ".conv_k", 1, 1, channels, cr, true};
  a.conv_out = {name + ".conv_out", 1, 1, channels, channels, true};
  return a;
}

std::size_t ASVTParams::param_count() const {
  return conv_v.param_count() + conv_q.param_count() + conv_k.param_count() + conv_out.param_count();
}

void ASVTParams::init(ParamSet& params, std::mt19937_64& rng) const {
  conv_v.init(params, rng);
  conv_q.init(params, rng);
  conv_k.init(params, rng);
  conv_out.init(params, rng);
}

NodeId attention_map(Tape& t, NodeId q, NodeId k) {
  const Matrix& vq = t.value(q);
  const Matrix& vk = t.value(k);
  if (vq.rows() == 0 || vk.rows() == 0) throw std::invalid_argument("attention_map: empty input");
  if (vq.cols() != vk.cols()) throw std::invalid_argument("attention_map: query/key width mismatch");
  return t.row_softmax(t.matmul(q, t.transpose(k)));
}

Matrix attention_map(const Matrix& q, const Matrix& k) {
  Tape t;
  return t.value(attention_map(t, t.constant(q), t.constant(k)));
}

NodeId asvt_forward(Graph& g, NodeId features, std::span<const std::size_t> offsets, const ASVTParams& asvt,
                    AsvtTrace* trace) {
  Tape& t = g.tape();
  if (t.value(features).cols() != asvt.channels)
    throw std::invalid_argument(asvt.name + ": channel mismatch, expected " + std::to_string(asvt.channels) +
                                " got " + std::to_string(t.value(features).cols()));
  if (offsets.size() < 2) throw std::invalid_argument(asvt.name + ": no segments");

  const NodeId v = pointwise_conv(g, features, asvt.conv_v);
  const NodeId q = pointwise_conv(g, features, asvt.conv_q);
  const NodeId k = pointwise_conv(g, features, asvt.conv_k);

  std::vector<NodeId> attended;
  attended.reserve(offsets.size() - 1);
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    const std::size_t lo = offsets[b];
    const std::size_t hi = offsets[b + 1];
    const bool whole = offsets.size() == 2;
    const NodeId qb = whole ? q : t.slice_rows(q, lo, hi);
    const NodeId kb = whole ? k : t.slice_rows(k, lo, hi);
    const NodeId vb = whole ? v : t.slice_rows(v, lo, hi);
    const NodeId s = attention_map(t, qb, kb);
    if (trace != nullptr) trace->attention.push_back(t.value(s));
    attended.push_back(t.matmul(s, vb));
  }
  const NodeId mixed = attended.size() == 1 ? attended[0] : t.concat_rows(attended);
  return t.add(features, pointwise_conv(g, mixed, asvt.conv_out));
}

SparseVoxelGrid asvt_forward(const SparseVoxelGrid& grid, const ParamSet& params, const ASVTParams& asvt) {
  Tape tape;
  Graph g(tape, params, Mode::kEval);
  const std::size_t offsets[] = {0, grid.size()};
  SparseVoxelGrid out = grid;
  out.features = tape.value(asvt_forward(g, tape.constant(grid.features), offsets, asvt));
  return out;
}

}  // namespace svtnet
