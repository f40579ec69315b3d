// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/csvt.hpp"

#include <stdexcept>

namespace svtnet {
namespace {

NodeId normalize(Tape& t, NodeId logits, SoftmaxAxis axis) {
  if (axis == SoftmaxAxis::kToken) return t.row_softmax(logits);
  return t.transpose(t.row_softmax(t.transpose(logits)));
}

}  // namespace

CSVTParams CSVTParams::make(const std::string& name, int channels, int tokens, SoftmaxAxis axis) {
  if (channels < 1 || tokens < 1) throw std::invalid_argument(name + ": invalid channel or token count");
  CSVTParams c;
  c.name = name;
  c.channels = channels;
  c.tokens = tokens;
  c.axis = axis;
  c.conv_group = {name + ".conv_group", 1, 1, channels, tokens, true};
  c.conv_tokfeat = {name + ".conv_tokfeat", 1, 1, channels, channels, true};
  c.lin_q = {name + ".lin_q", 1, 1, channels, channels, true};
  c.lin_k = {name + ".lin_k", 1, 1, channels, channels, true};
  c.lin_v = {name + ".lin_v", 1, 1, channels, channels, true};
  c.lin_attn_out = {name + ".lin_attn_out", 1, 1, channels, channels, true};
  c.lin_p = {name + ".lin_p", 1, 1, channels, channels, true};
  c.conv_proj_query = {name + ".conv_proj_query", 1, 1, channels, channels, true};
  c.conv_out = {name + ".conv_out", 1, 1, channels, channels, true};
  return c;
}

std::size_t CSVTParams::param_count() const {
  return conv_group.param_count() + conv_tokfeat.param_count() + lin_q.param_count() + lin_k.param_count() +
         lin_v.param_count() + lin_attn_out.param_count() + lin_p.param_count() +
         conv_proj_query.param_count() + conv_out.param_count();
}

void CSVTParams::init(ParamSet& params, std::mt19937_64& rng) const {
  for (const SPConvParams* c : {&conv_group, &conv_tokfeat, &lin_q, &lin_k, &lin_v, &lin_attn_out, &lin_p,
                                &conv_proj_query, &conv_out}) {
    c->init(params, rng);
  }
}

TokenizeResult tokenize(Graph& g, NodeId features, const CSVTParams& csvt) {
  Tape& t = g.tape();
  if (t.value(features).rows() == 0) throw std::invalid_argument(csvt.name + ": empty grid");
  const NodeId grouping = normalize(t, pointwise_conv(g, features, csvt.conv_group), csvt.axis);
  const NodeId tokfeat = pointwise_conv(g, features, csvt.conv_tokfeat);
  return {t.matmul(t.transpose(grouping), tokfeat), grouping};
}

NodeId token_transformer(Graph& g, NodeId tokens, const CSVTParams& csvt) {
  Tape& t = g.tape();
  const NodeId tq = pointwise_conv(g, tokens, csvt.lin_q);
  const NodeId tk = pointwise_conv(g, tokens, csvt.lin_k);
  const NodeId tv = pointwise_conv(g, tokens, csvt.lin_v);
  const NodeId weights = t.row_softmax(t.matmul(tq, t.transpose(tk)));
  return t.add(tokens, pointwise_conv(g, t.matmul(weights, tv), csvt.lin_attn_out));
}

NodeId project(Graph& g, NodeId features, NodeId attended_tokens, const CSVTParams& csvt, NodeId* reprojection) {
  Tape& t = g.tape();
  const Matrix& ts = t.value(attended_tokens);
  if (ts.rows() != csvt.tokens || ts.cols() != csvt.channels)
    throw std::invalid_argument(csvt.name + ": token set shape mismatch");
  const NodeId tp = pointwise_conv(g, attended_tokens, csvt.lin_p);
  const NodeId query = pointwise_conv(g, features, csvt.conv_proj_query);
  const NodeId mp = normalize(t, t.matmul(query, t.transpose(tp)), csvt.axis);
  if (reprojection != nullptr) *reprojection = mp;
  return t.add(features, pointwise_conv(g, t.matmul(mp, tp), csvt.conv_out));
}

NodeId csvt_forward(Graph& g, NodeId features, std::span<const std::size_t> offsets, const CSVTParams& csvt,
                    CsvtTrace* trace) {
  Tape& t = g.tape();
  if (t.value(features).cols() != csvt.channels)
    throw std::invalid_argument(csvt.name + ": channel mismatch, expected " + std::to_string(csvt.channels) +
                                " got " + std::to_string(t.value(features).cols()));
  if (offsets.size() < 2) throw std::invalid_argument(csvt.name + ": no segments");

  std::vector<NodeId> outputs;
  outputs.reserve(offsets.size() - 1);
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    const NodeId x = offsets.size() == 2 ? features : t.slice_rows(features, offsets[b], offsets[b + 1]);
    const TokenizeResult tok = tokenize(g, x, csvt);
    const NodeId attended = token_transformer(g, tok.tokens, csvt);
    NodeId mp = 0;
    outputs.push_back(project(g, x, attended, csvt, &mp));
    if (trace != nullptr) {
      trace->grouping.push_back(t.value(tok.grouping));
      trace->reprojection.push_back(t.value(mp));
    }
  }
  return outputs.size() == 1 ? outputs[0] : t.concat_rows(outputs);
}

SparseVoxelGrid csvt_forward(const SparseVoxelGrid& grid, const ParamSet& params, const CSVTParams& csvt) {
  Tape tape;
  Graph g(tape, params, Mode::kEval);
  const std::size_t offsets[] = {0, grid.size()};
  SparseVoxelGrid out = grid;
  out.features = tape.value(csvt_forward(g, tape.constant(grid.features), offsets, csvt));
  return out;
}

}  // namespace svtnet
