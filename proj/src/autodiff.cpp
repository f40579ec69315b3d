// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace svtnet {
namespace {

std::string dims(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(OpKind op, const std::string& detail) {
  throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " + detail);
}

void accumulate(Matrix& dst, const Matrix& src) {
  if (dst.size() == 0) {
    dst = src;
  } else {
    dst += src;
  }
}

template <typename Expr>
void accumulate_expr(Matrix& dst, const Expr& src) {
  if (dst.size() == 0) {
    dst = src;
  } else {
    dst += src;
  }
}

Matrix& grad_slot(std::vector<Matrix>& grads, NodeId id, Eigen::Index rows, Eigen::Index cols) {
  Matrix& g = grads[id];
  if (g.size() == 0) g = Matrix::Zero(rows, cols);
  return g;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "subtract";
    case OpKind::kMul: return "elementwise_multiply";
    case OpKind::kScale: return "scalar_scale";
    case OpKind::kRowSoftmax: return "row_softmax";
    case OpKind::kRelu: return "relu";
    case OpKind::kClampMin: return "clamp_min";
    case OpKind::kPower: return "power";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kScatterAddRows: return "scatter_add_rows";
    case OpKind::kReduceMeanRows: return "reduce_mean_rows";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kSliceRows: return "slice_rows";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSum: return "sum";
  }
  return "unknown";
}

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

bool Tape::needs_grad(std::initializer_list<NodeId> ids) const {
  for (NodeId id : ids) {
    if (nodes_.at(id).requires_grad) return true;
  }
  return false;
}

NodeId Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.cols() != vb.rows()) shape_error(OpKind::kMatMul, "(" + dims(va) + ") * (" + dims(vb) + ")");
  Node n;
  n.kind = OpKind::kMatMul;
  n.inputs = {a, b};
  n.num_inputs = 2;
  n.requires_grad = needs_grad({a, b});
  n.value.noalias() = va * vb;
  return push(std::move(n));
}

NodeId Tape::transpose(NodeId a) {
  Node n;
  n.kind = OpKind::kTranspose;
  n.inputs = {a};
  n.num_inputs = 1;
  n.requires_grad = needs_grad({a});
  n.value = value(a).transpose();
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a, b};
  n.num_inputs = 2;
  n.requires_grad = needs_grad({a, b});
  if (va.rows() == vb.rows() && va.cols() == vb.cols()) {
    n.value = va + vb;
  } else if (vb.rows() == 1 && vb.cols() == va.cols()) {
    n.value = va.rowwise() + vb.row(0);
  } else {
    shape_error(OpKind::kAdd, "(" + dims(va) + ") + (" + dims(vb) + ")");
  }
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  Node n;
  n.kind = OpKind::kSub;
  n.inputs = {a, b};
  n.num_inputs = 2;
  n.requires_grad = needs_grad({a, b});
  if (va.rows() == vb.rows() && va.cols() == vb.cols()) {
    n.value = va - vb;
  } else if (vb.rows() == 1 && vb.cols() == va.cols()) {
    n.value = va.rowwise() - vb.row(0);
  } else {
    shape_error(OpKind::kSub, "(" + dims(va) + ") - (" + dims(vb) + ")");
  }
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols())
    shape_error(OpKind::kMul, "(" + dims(va) + ") .* (" + dims(vb) + ")");
  Node n;
  n.kind = OpKind::kMul;
  n.inputs = {a, b};
  n.num_inputs = 2;
  n.requires_grad = needs_grad({a, b});
  n.value = va.cwiseProduct(vb);
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double factor) {
  Node n;
  n.kind = OpKind::kScale;
  n.inputs = {a};
  n.num_inputs = 1;
  n.requires_grad = needs_grad({a});
  n.scalar = factor;
  n.value = value(a) * factor;
  return push(std::move(n));
}

NodeId Tape::row_softmax(NodeId a) {
  const Matrix& va = value(a);
  if (va.cols() == 0) shape_error(OpKind::kRowSoftmax, "(" + dims(va) + ")");
  Node n;
  n.kind = OpKind::kRowSoftmax;
  n.inputs = {a};
  n.num_inputs = 1;
  n.requires_grad = needs_grad({a});
  n.value.resize(va.rows(), va.cols());
  for (Eigen::Index r = 0; r < va.rows(); ++r) {
    const double mx = va.row(r).maxCoeff();
    n.value.row(r) = (va.row(r).array() - mx).exp().matrix();
    n.value.row(r) /= n.value.row(r).sum();
  }
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Node n;
  n.kind = OpKind::kRelu;
  n.inputs = {a};
  n.num_inputs = 1;
  n.requires_grad = needs_grad({a});
  n.value = value(a).cwiseMax(0.0);
  return push(std::move(n));
}

NodeId Tape::clamp_min(NodeId a, double threshold) {
  Node n;
  n.kind = OpKind::kClampMin;
  n.inputs = {a};
  n.num_inputs = 1;
  n.requires_grad = needs_grad({a});
  n.scalar = threshold;
  n.value = value(a).cwiseMax(threshold);
  return push(std::move(n));
}

NodeId Tape::power(NodeId a, NodeId p) {
  const Matrix& vp = value(p);
  if (vp.rows() != 1 || vp.cols() != 1) shape_error(OpKind::kPower, "exponent must be 1x1, got " + dims(vp));
  Node n;
  n.kind = OpKind::kPower;
  n.inputs = {a, p};
  n.num_inputs = 2;
  n.requires_grad = needs_grad({a, p});
  const double e = vp(0, 0);
  n.value = value(a).array().pow(e).matrix();
  return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId a, std::vector<std::int32_t> index) {
  const Matrix& va = value(a);
  Node n;
  n.kind = OpKind::kGatherRows;
  n.inputs = {a};
  n.num_inputs = 1;
  n.requires_grad = needs_grad({a});
  n.value.resize(static_cast<Eigen::Index>(index.size()), va.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= va.rows())
      shape_error(OpKind::kGatherRows, "index " + std::to_string(index[i]) + " outside " + dims(va));
    n.value.row(static_cast<Eigen::Index>(i)) = va.row(index[i]);
  }
  n.index = std::move(index);
  return push(std::move(n));
}

NodeId Tape::scatter_add_rows(NodeId a, std::vector<std::int32_t> index, std::size_t out_rows) {
  const Matrix& va = value(a);
  if (static_cast<std::size_t>(va.rows()) != index.size())
    shape_error(OpKind::kScatterAddRows,
                "(" + dims(va) + ") with " + std::to_string(index.size()) + " indices");
  Node n;
  n.kind = OpKind::kScatterAddRows;
  n.inputs = {a};
  n.num_inputs = 1;
  n.requires_grad = needs_grad({a});
  n.value = Matrix::Zero(static_cast<Eigen::Index>(out_rows), va.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= out_rows)
      shape_error(OpKind::kScatterAddRows,
                  "index " + std::to_string(index[i]) + " outside " + std::to_string(out_rows) + " rows");
    n.value.row(index[i]) += va.row(static_cast<Eigen::Index>(i));
  }
  n.index = std::move(index);
  return push(std::move(n));
}

NodeId Tape::reduce_mean_rows(NodeId a) {
  const Matrix& va = value(a);
  if (va.rows() == 0) shape_error(OpKind::kReduceMeanRows, "(" + dims(va) + ")");
  Node n;
  n.kind = OpKind::kReduceMeanRows;
  n.inputs = {a};
  n.num_inputs = 1;
  n.requires_grad = needs_grad({a});
  n.value = va.colwise().sum() / static_cast<double>(va.rows());
  return push(std::move(n));
}

NodeId Tape::slice_rows(NodeId a, std::size_t begin, std::size_t end) {
  const Matrix& va = value(a);
  if (begin > end || end > static_cast<std::size_t>(va.rows()))
    shape_error(OpKind::kSliceRows,
                "[" + std::to_string(begin) + ", " + std::to_string(end) + ") of " + dims(va));
  Node n;
  n.kind = OpKind::kSliceRows;
  n.inputs = {a};
  n.num_inputs = 1;
  n.requires_grad = needs_grad({a});
  n.extent = begin;
  n.value = va.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  return push(std::move(n));
}

NodeId Tape::concat_rows(std::span<const NodeId> parts) {
  if (parts.empty()) shape_error(OpKind::kConcatRows, "no inputs");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  Node n;
  n.kind = OpKind::kConcatRows;
  for (NodeId p : parts) {
    const Matrix& v = value(p);
    if (v.cols() != cols) shape_error(OpKind::kConcatRows, "column count " + dims(v));
    rows += v.rows();
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (NodeId p : parts) {
    const Matrix& v = value(p);
    n.value.middleRows(at, v.rows()) = v;
    at += v.rows();
  }
  n.parts.assign(parts.begin(), parts.end());
  return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.rows() != vb.rows()) shape_error(OpKind::kConcatCols, "(" + dims(va) + ") | (" + dims(vb) + ")");
  Node n;
  n.kind = OpKind::kConcatCols;
  n.inputs = {a, b};
  n.num_inputs = 2;
  n.requires_grad = needs_grad({a, b});
  n.value.resize(va.rows(), va.cols() + vb.cols());
  n.value.leftCols(va.cols()) = va;
  n.value.rightCols(vb.cols()) = vb;
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.kind = OpKind::kSum;
  n.inputs = {a};
  n.num_inputs = 1;
  n.requires_grad = needs_grad({a});
  n.value = Matrix::Constant(1, 1, value(a).sum());
  return push(std::move(n));
}

NodeId Tape::batch_norm(NodeId x, NodeId gamma, NodeId beta, Mode mode, const Matrix& running_mean,
                        const Matrix& running_var, double eps, BatchStats* stats) {
  const Matrix& vx = value(x);
  const Matrix& vg = value(gamma);
  const Matrix& vb = value(beta);
  const Eigen::Index c = vx.cols();
  if (vg.rows() != 1 || vg.cols() != c || vb.rows() != 1 || vb.cols() != c)
    shape_error(OpKind::kBatchNorm, "input " + dims(vx) + " gamma " + dims(vg) + " beta " + dims(vb));
  if (vx.rows() == 0) throw std::invalid_argument("batch_norm: empty input");

  Matrix mean;
  Matrix var;
  if (mode == Mode::kTrain) {
    if (vx.rows() < 2) throw std::invalid_argument("degenerate batch statistics");
    mean = vx.colwise().mean();
    var = (vx.rowwise() - mean.row(0)).array().square().colwise().mean().matrix();
    if (stats != nullptr) {
      stats->mean = mean;
      stats->variance = var;
      stats->rows = static_cast<std::size_t>(vx.rows());
    }
  } else {
    if (running_mean.cols() != c || running_var.cols() != c)
      shape_error(OpKind::kBatchNorm, "running stats do not match " + dims(vx));
    mean = running_mean;
    var = running_var;
  }

  Node n;
  n.kind = OpKind::kBatchNorm;
  n.inputs = {x, gamma, beta};
  n.num_inputs = 3;
  n.requires_grad = needs_grad({x, gamma, beta});
  n.scalar = mode == Mode::kTrain ? 1.0 : 0.0;
  n.saved2 = (var.array() + eps).rsqrt().matrix();  // 1 x C inverse std
  n.saved = (vx.rowwise() - mean.row(0)).array().rowwise() * n.saved2.row(0).array();
  n.value = (n.saved.array().rowwise() * vg.row(0).array()).rowwise() + vb.row(0).array();
  return push(std::move(n));
}

Gradients Tape::backward(NodeId loss) const {
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("backward: loss must be 1x1, got " + dims(lv));

  std::vector<Matrix> grads(nodes_.size());
  grads[loss] = Matrix::Ones(1, 1);

  auto want = [&](NodeId id) { return nodes_[id].requires_grad; };

  for (NodeId i = loss + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.kind == OpKind::kLeaf || grads[i].size() == 0 || !n.requires_grad) continue;
    const Matrix& g = grads[i];
    const NodeId a = n.inputs[0];
    const NodeId b = n.inputs[1];

    switch (n.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kMatMul:
        if (want(a)) accumulate_expr(grads[a], g * nodes_[b].value.transpose());
        if (want(b)) accumulate_expr(grads[b], nodes_[a].value.transpose() * g);
        break;
      case OpKind::kTranspose:
        if (want(a)) accumulate_expr(grads[a], g.transpose());
        break;
      case OpKind::kAdd:
      case OpKind::kSub: {
        const double sign = n.kind == OpKind::kAdd ? 1.0 : -1.0;
        if (want(a)) accumulate(grads[a], g);
        if (want(b)) {
          if (nodes_[b].value.rows() == g.rows()) {
            accumulate_expr(grads[b], sign * g);
          } else {
            accumulate_expr(grads[b], sign * g.colwise().sum());
          }
        }
        break;
      }
      case OpKind::kMul:
        if (want(a)) accumulate_expr(grads[a], g.cwiseProduct(nodes_[b].value));
        if (want(b)) accumulate_expr(grads[b], g.cwiseProduct(nodes_[a].value));
        break;
      case OpKind::kScale:
        if (want(a)) accumulate_expr(grads[a], n.scalar * g);
        break;
      case OpKind::kRowSoftmax:
        if (want(a)) {
          const Matrix& y = n.value;
          Matrix dx = y.cwiseProduct(g);
          const Eigen::VectorXd dots = dx.rowwise().sum();
          dx.array() -= y.array().colwise() * dots.array();
          accumulate(grads[a], dx);
        }
        break;
      case OpKind::kRelu:
        if (want(a)) {
          accumulate_expr(grads[a], (nodes_[a].value.array() > 0.0).select(g, 0.0).matrix());
        }
        break;
      case OpKind::kClampMin:
        if (want(a)) {
          accumulate_expr(grads[a], (nodes_[a].value.array() > n.scalar).select(g, 0.0).matrix());
        }
        break;
      case OpKind::kPower: {
        const Matrix& x = nodes_[a].value;
        const double e = nodes_[b].value(0, 0);
        if (want(a)) {
          // d/dx x^e = e x^(e-1); x == 0 is handled via the value to avoid 0 * inf.
          Matrix dx(x.rows(), x.cols());
          for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
              const double xv = x(r, c);
              const double d = xv != 0.0 ? e * n.value(r, c) / xv : (e == 1.0 ? 1.0 : 0.0);
              dx(r, c) = g(r, c) * d;
            }
          }
          accumulate(grads[a], dx);
        }
        if (want(b)) {
          double dp = 0.0;
          for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
              if (x(r, c) > 0.0) dp += g(r, c) * n.value(r, c) * std::log(x(r, c));
            }
          }
          accumulate(grads[b], Matrix::Constant(1, 1, dp));
        }
        break;
      }
      case OpKind::kGatherRows:
        if (want(a)) {
          const Matrix& x = nodes_[a].value;
          Matrix& ga = grad_slot(grads, a, x.rows(), x.cols());
          for (std::size_t r = 0; r < n.index.size(); ++r) ga.row(n.index[r]) += g.row(static_cast<Eigen::Index>(r));
        }
        break;
      case OpKind::kScatterAddRows:
        if (want(a)) {
          const Matrix& x = nodes_[a].value;
          Matrix& ga = grad_slot(grads, a, x.rows(), x.cols());
          for (std::size_t r = 0; r < n.index.size(); ++r) ga.row(static_cast<Eigen::Index>(r)) += g.row(n.index[r]);
        }
        break;
      case OpKind::kReduceMeanRows:
        if (want(a)) {
          const Matrix& x = nodes_[a].value;
          Matrix& ga = grad_slot(grads, a, x.rows(), x.cols());
          ga.rowwise() += g.row(0) / static_cast<double>(x.rows());
        }
        break;
      case OpKind::kSliceRows:
        if (want(a)) {
          const Matrix& x = nodes_[a].value;
          Matrix& ga = grad_slot(grads, a, x.rows(), x.cols());
          ga.middleRows(static_cast<Eigen::Index>(n.extent), g.rows()) += g;
        }
        break;
      case OpKind::kConcatRows: {
        Eigen::Index at = 0;
        for (NodeId p : n.parts) {
          const Eigen::Index rows = nodes_[p].value.rows();
          if (want(p)) accumulate_expr(grads[p], g.middleRows(at, rows));
          at += rows;
        }
        break;
      }
      case OpKind::kConcatCols: {
        const Eigen::Index ca = nodes_[a].value.cols();
        if (want(a)) accumulate_expr(grads[a], g.leftCols(ca));
        if (want(b)) accumulate_expr(grads[b], g.rightCols(g.cols() - ca));
        break;
      }
      case OpKind::kSum:
        if (want(a)) {
          const Matrix& x = nodes_[a].value;
          accumulate_expr(grads[a], Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
        }
        break;
      case OpKind::kBatchNorm: {
        const NodeId gamma = n.inputs[1];
        const NodeId beta = n.inputs[2];
        const Matrix& xhat = n.saved;
        const Matrix& inv_std = n.saved2;
        const Matrix& vg = nodes_[gamma].value;
        if (want(gamma)) accumulate_expr(grads[gamma], g.cwiseProduct(xhat).colwise().sum());
        if (want(beta)) accumulate_expr(grads[beta], g.colwise().sum());
        if (want(a)) {
          const Matrix dxhat = g.array().rowwise() * vg.row(0).array();
          if (n.scalar > 0.5) {
            const double rows = static_cast<double>(g.rows());
            const Matrix sum_d = dxhat.colwise().sum();
            const Matrix sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
            Matrix dx = (dxhat * rows).rowwise() - sum_d.row(0);
            dx -= (xhat.array().rowwise() * sum_dx.row(0).array()).matrix();
            dx = (dx.array().rowwise() * (inv_std.row(0).array() / rows)).matrix();
            accumulate(grads[a], dx);
          } else {
            accumulate_expr(grads[a], (dxhat.array().rowwise() * inv_std.row(0).array()).matrix());
          }
        }
        break;
      }
    }
    if (i != loss) grads[i] = Matrix();
  }

  for (NodeId i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind != OpKind::kLeaf || !n.requires_grad) {
      grads[i] = Matrix();
    } else if (grads[i].size() == 0) {
      grads[i] = Matrix::Zero(n.value.rows(), n.value.cols());
    }
  }
  return Gradients(std::move(grads));
}

double grad_check(const Objective& f, const Vector& theta, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be > 0");
  Vector analytic(theta.size());
  const double f0 = f(theta, &analytic);
  if (!std::isfinite(f0)) throw std::runtime_error("grad_check: non-finite objective");
  if (analytic.size() != theta.size()) throw std::invalid_argument("grad_check: gradient size mismatch");

  double worst = 0.0;
  Vector probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + eps;
    const double fp = f(probe, nullptr);
    probe[i] = theta[i] - eps;
    const double fm = f(probe, nullptr);
    probe[i] = theta[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw std::runtime_error("grad_check: non-finite objective");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace svtnet
