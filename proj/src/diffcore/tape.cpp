/*
 * Copyright 2026 The BrainOOD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "brainood/diffcore/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "brainood/common/error.hpp"
#include "brainood/diffcore/kernels.hpp"

namespace brainood::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSquare: return "square";
    case OpKind::kXLogX: return "xlogx";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kColSum: return "col_sum";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSliceRows: return "slice_rows";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kScatter: return "scatter";
    case OpKind::kTileRows: return "tile_rows";
    case OpKind::kBlockSum: return "block_sum";
    case OpKind::kBlockColSum: return "block_col_sum";
    case OpKind::kBlockMatMul: return "block_matmul";
    case OpKind::kBlockMatMulNT: return "block_matmul_nt";
    case OpKind::kDropout: return "dropout";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "?";
}

namespace {

using Inputs = std::vector<const Matrix*>;

[[noreturn]] void shape_fail(OpKind kind, const Inputs& in, const std::string& detail = {}) {
  std::string msg = std::string(op_name(kind)) + ": shape mismatch";
  for (std::size_t i = 0; i < in.size(); ++i) msg += (i == 0 ? " " : " vs ") + in[i]->shape_string();
  if (!detail.empty()) msg += " (" + detail + ")";
  throw ShapeError(msg);
}

enum class Broadcast { kSame, kScalar, kRow, kCol };

Broadcast broadcast_kind(OpKind kind, const Matrix& a, const Matrix& b) {
  if (a.same_shape(b)) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  shape_fail(kind, {&a, &b});
}

template <typename F>
Matrix broadcast_apply(const Matrix& a, const Matrix& b, Broadcast bk, F f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      double bv = 0.0;
      switch (bk) {
        case Broadcast::kSame: bv = b(r, c); break;
        case Broadcast::kScalar: bv = b[0]; break;
        case Broadcast::kRow: bv = b(0, c); break;
        case Broadcast::kCol: bv = b(r, 0); break;
      }
      out(r, c) = f(a(r, c), bv);
    }
  }
  return out;
}

// Reduces a gradient of a's shape down to b's broadcast shape.
Matrix reduce_to(const Matrix& g, const Matrix& b, Broadcast bk) {
  switch (bk) {
    case Broadcast::kSame: return g;
    case Broadcast::kScalar: {
      double s = 0.0;
      for (double v : g.values()) s += v;
      return Matrix::scalar(s);
    }
    case Broadcast::kRow: {
      Matrix out(1, b.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        kernels::active().accumulate(g.data() + r * g.cols(), out.data(), g.cols());
      return out;
    }
    case Broadcast::kCol: {
      Matrix out(b.rows(), 1);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) s += g(r, c);
        out(r, 0) = s;
      }
      return out;
    }
  }
  return g;
}

template <typename F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix gemm(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  kernels::active().gemm(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
  return out;
}

// aᵀ·b
Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  kernels::active().gemm_tn(a.data(), b.data(), out.data(), a.cols(), a.rows(), b.cols());
  return out;
}

// a·bᵀ, routed through an explicit transpose so the k-order matches gemm.
Matrix gemm_nt(const Matrix& a, const Matrix& b) { return gemm(a, b.transposed()); }

void block_shapes(OpKind kind, const Matrix& a, const Matrix& b, std::size_t blocks, bool nt) {
  if (blocks == 0 || a.rows() % blocks != 0 || b.rows() % blocks != 0) shape_fail(kind, {&a, &b}, "blocks");
  const std::size_t q = b.rows() / blocks;
  if (!nt && a.cols() != q) shape_fail(kind, {&a, &b});
  if (nt && a.cols() != b.cols()) shape_fail(kind, {&a, &b});
}

Matrix block_product(const Matrix& a, const Matrix& b, std::size_t blocks, bool nt) {
  const std::size_t p = a.rows() / blocks;
  const std::size_t q = b.rows() / blocks;
  const std::size_t out_cols = nt ? q : b.cols();
  Matrix out(a.rows(), out_cols);
  const auto& k = kernels::active();
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const double* ab = a.data() + blk * p * a.cols();
    const double* bb = b.data() + blk * q * b.cols();
    double* ob = out.data() + blk * p * out_cols;
    if (!nt) {
      k.gemm(ab, bb, ob, p, a.cols(), b.cols());
    } else {
      std::vector<double> bt(b.cols() * q);
      for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) bt[j * q + i] = bb[i * b.cols() + j];
      k.gemm(ab, bt.data(), ob, p, a.cols(), q);
    }
  }
  return out;
}

struct BatchNormParts {
  Matrix xhat;
  std::vector<double> inv_std;
};

BatchNormParts batch_norm_parts(const Matrix& x, const OpAux& aux) {
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  std::vector<double> mean(c, 0.0);
  std::vector<double> var(c, 0.0);
  if (aux.flag) {
    const ColumnStats st = column_stats(x);
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = st.mean[j];
      var[j] = st.biased_var[j];
    }
  } else {
    const Matrix& run = *aux.constant;
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = run(0, j);
      var[j] = run(1, j);
    }
  }
  BatchNormParts parts{Matrix(r, c), std::vector<double>(c)};
  for (std::size_t j = 0; j < c; ++j) parts.inv_std[j] = 1.0 / std::sqrt(var[j] + aux.scalar);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) parts.xhat(i, j) = (x(i, j) - mean[j]) * parts.inv_std[j];
  return parts;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      p(i, j) = std::exp(logits(i, j) - mx);
      z += p(i, j);
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) p(i, j) /= z;
  }
  return p;
}

// Validates shapes and computes the value of one primitive.
Matrix compute(OpKind kind, const Inputs& in, const OpAux& aux) {
  const auto& kern = kernels::active();
  auto arity = [&](std::size_t n) {
    if (in.size() != n) throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n) + " inputs");
  };
  switch (kind) {
    case OpKind::kLeaf:
      throw Error(ErrorCode::kInternal, "compute called on leaf");
    case OpKind::kMatMul: {
      arity(2);
      if (in[0]->cols() != in[1]->rows()) shape_fail(kind, in);
      return gemm(*in[0], *in[1]);
    }
    case OpKind::kTranspose:
      arity(1);
      return in[0]->transposed();
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      arity(2);
      const Matrix& a = *in[0];
      const Matrix& b = *in[1];
      const Broadcast bk = broadcast_kind(kind, a, b);
      if (bk == Broadcast::kSame) {
        Matrix out(a.rows(), a.cols());
        if (kind == OpKind::kAdd) kern.add(a.data(), b.data(), out.data(), a.size());
        if (kind == OpKind::kSub) kern.sub(a.data(), b.data(), out.data(), a.size());
        if (kind == OpKind::kMul) kern.mul(a.data(), b.data(), out.data(), a.size());
        return out;
      }
      if (kind == OpKind::kAdd) return broadcast_apply(a, b, bk, [](double x, double y) { return x + y; });
      if (kind == OpKind::kSub) return broadcast_apply(a, b, bk, [](double x, double y) { return x - y; });
      return broadcast_apply(a, b, bk, [](double x, double y) { return x * y; });
    }
    case OpKind::kScale: {
      arity(1);
      Matrix out(in[0]->rows(), in[0]->cols());
      kern.scale(aux.scalar, in[0]->data(), out.data(), out.size());
      return out;
    }
    case OpKind::kAddScalar:
      arity(1);
      return map(*in[0], [s = aux.scalar](double x) { return x + s; });
    case OpKind::kSigmoid:
      arity(1);
      return map(*in[0], stable_sigmoid);
    case OpKind::kTanh:
      arity(1);
      return map(*in[0], [](double x) { return std::tanh(x); });
    case OpKind::kRelu:
      arity(1);
      return map(*in[0], [](double x) { return x > 0.0 ? x : 0.0; });
    case OpKind::kExp:
      arity(1);
      return map(*in[0], [](double x) { return std::exp(x); });
    case OpKind::kLog:
      arity(1);
      for (double v : in[0]->values())
        if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
      return map(*in[0], [](double x) { return std::log(x); });
    case OpKind::kSqrt:
      arity(1);
      for (double v : in[0]->values())
        if (!(v >= 0.0)) throw DomainError("sqrt: negative input " + std::to_string(v));
      return map(*in[0], [](double x) { return std::sqrt(x); });
    case OpKind::kSquare:
      arity(1);
      return map(*in[0], [](double x) { return x * x; });
    case OpKind::kXLogX:
      arity(1);
      for (double v : in[0]->values())
        if (!(v >= 0.0)) throw DomainError("xlogx: negative input " + std::to_string(v));
      return map(*in[0], [](double x) { return x == 0.0 ? 0.0 : x * std::log(x); });
    case OpKind::kSum:
    case OpKind::kMean: {
      arity(1);
      double s = 0.0;
      for (double v : in[0]->values()) s += v;
      if (kind == OpKind::kMean) {
        if (in[0]->empty()) shape_fail(kind, in, "empty");
        s /= static_cast<double>(in[0]->size());
      }
      return Matrix::scalar(s);
    }
    case OpKind::kRowSum: {
      arity(1);
      const Matrix& a = *in[0];
      Matrix out(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c);
        out(r, 0) = s;
      }
      return out;
    }
    case OpKind::kColSum: {
      arity(1);
      const Matrix& a = *in[0];
      Matrix out(1, a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) kern.accumulate(a.data() + r * a.cols(), out.data(), a.cols());
      return out;
    }
    case OpKind::kConcatRows: {
      if (in.empty()) throw ShapeError("concat_rows: no inputs");
      std::size_t rows = 0;
      for (const Matrix* m : in) {
        if (m->cols() != in[0]->cols()) shape_fail(kind, in);
        rows += m->rows();
      }
      Matrix out(rows, in[0]->cols());
      double* dst = out.data();
      for (const Matrix* m : in) dst = std::copy(m->data(), m->data() + m->size(), dst);
      return out;
    }
    case OpKind::kConcatCols: {
      if (in.empty()) throw ShapeError("concat_cols: no inputs");
      std::size_t cols = 0;
      for (const Matrix* m : in) {
        if (m->rows() != in[0]->rows()) shape_fail(kind, in);
        cols += m->cols();
      }
      Matrix out(in[0]->rows(), cols);
      for (std::size_t r = 0; r < out.rows(); ++r) {
        std::size_t off = 0;
        for (const Matrix* m : in) {
          std::copy(m->data() + r * m->cols(), m->data() + (r + 1) * m->cols(), out.data() + r * cols + off);
          off += m->cols();
        }
      }
      return out;
    }
    case OpKind::kSliceRows: {
      arity(1);
      const Matrix& a = *in[0];
      if (aux.a + aux.b > a.rows()) shape_fail(kind, in, "slice out of range");
      Matrix out(aux.b, a.cols());
      std::copy(a.data() + aux.a * a.cols(), a.data() + (aux.a + aux.b) * a.cols(), out.data());
      return out;
    }
    case OpKind::kGatherRows: {
      arity(1);
      const Matrix& a = *in[0];
      const auto& idx = *aux.index;
      Matrix out(idx.size(), a.cols());
      for (std::size_t e = 0; e < idx.size(); ++e) {
        if (idx[e] >= a.rows()) shape_fail(kind, in, "row index out of range");
        std::copy(a.data() + idx[e] * a.cols(), a.data() + (idx[e] + 1) * a.cols(), out.data() + e * a.cols());
      }
      return out;
    }
    case OpKind::kScatter: {
      arity(1);
      const Matrix& v = *in[0];
      const auto& pos = *aux.index;
      const std::size_t per = aux.a;
      if (v.cols() != 1 || per == 0 || pos.size() != v.rows() * per) shape_fail(kind, in, "positions");
      Matrix out(aux.b, aux.c);
      for (std::size_t e = 0; e < v.rows(); ++e) {
        for (std::size_t t = 0; t < per; ++t) {
          const std::size_t p = pos[e * per + t];
          if (p >= out.size()) shape_fail(kind, in, "position out of range");
          out[p] = v[e];
        }
      }
      return out;
    }
    case OpKind::kTileRows: {
      arity(1);
      const Matrix& a = *in[0];
      Matrix out(a.rows() * aux.a, a.cols());
      for (std::size_t t = 0; t < aux.a; ++t) std::copy(a.data(), a.data() + a.size(), out.data() + t * a.size());
      return out;
    }
    case OpKind::kBlockSum: {
      arity(1);
      const Matrix& a = *in[0];
      if (aux.a == 0 || a.rows() % aux.a != 0) shape_fail(kind, in, "blocks");
      const std::size_t r = a.rows() / aux.a;
      Matrix out(r, a.cols());
      for (std::size_t blk = 0; blk < aux.a; ++blk) kern.accumulate(a.data() + blk * r * a.cols(), out.data(), out.size());
      return out;
    }
    case OpKind::kBlockColSum: {
      arity(1);
      const Matrix& a = *in[0];
      if (aux.a == 0 || a.rows() % aux.a != 0) shape_fail(kind, in, "blocks");
      const std::size_t r = a.rows() / aux.a;
      Matrix out(aux.a, a.cols());
      for (std::size_t blk = 0; blk < aux.a; ++blk)
        for (std::size_t i = 0; i < r; ++i)
          kern.accumulate(a.data() + (blk * r + i) * a.cols(), out.data() + blk * a.cols(), a.cols());
      return out;
    }
    case OpKind::kBlockMatMul:
    case OpKind::kBlockMatMulNT: {
      arity(2);
      const bool nt = kind == OpKind::kBlockMatMulNT;
      block_shapes(kind, *in[0], *in[1], aux.a, nt);
      return block_product(*in[0], *in[1], aux.a, nt);
    }
    case OpKind::kDropout: {
      arity(1);
      if (!aux.constant || !aux.constant->same_shape(*in[0])) shape_fail(kind, in, "mask");
      Matrix out(in[0]->rows(), in[0]->cols());
      kern.mul(in[0]->data(), aux.constant->data(), out.data(), out.size());
      return out;
    }
    case OpKind::kBatchNorm: {
      arity(1);
      if (aux.flag && in[0]->rows() == 0) shape_fail(kind, in, "empty batch");
      if (!aux.flag && (!aux.constant || aux.constant->rows() != 2 || aux.constant->cols() != in[0]->cols()))
        shape_fail(kind, in, "running statistics");
      return batch_norm_parts(*in[0], aux).xhat;
    }
    case OpKind::kSoftmaxCrossEntropy: {
      arity(1);
      const Matrix& z = *in[0];
      const auto& labels = *aux.index;
      if (labels.size() != z.rows() || z.rows() == 0) shape_fail(kind, in, "labels");
      double total = 0.0;
      for (std::size_t i = 0; i < z.rows(); ++i) {
        if (labels[i] >= z.cols()) shape_fail(kind, in, "label out of range");
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) s += std::exp(z(i, j) - mx);
        total += mx + std::log(s) - z(i, labels[i]);
      }
      return Matrix::scalar(total / static_cast<double>(z.rows()));
    }
  }
  throw Error(ErrorCode::kInternal, "unknown op");
}

void accumulate_into(Matrix& slot, const Matrix& g) {
  if (slot.empty() && !g.empty()) {
    slot = g;
    return;
  }
  kernels::active().accumulate(g.data(), slot.data(), g.size());
}

}  // namespace

const Matrix& Var::value() const { return tape->node(id).value; }

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::apply(OpKind kind, std::span<const Var> inputs, OpAux aux) {
  Node n;
  n.kind = kind;
  Inputs vals;
  vals.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape != this) throw Error(ErrorCode::kInternal, std::string(op_name(kind)) + ": input from another tape");
    n.inputs.push_back(v.id);
    vals.push_back(&nodes_[static_cast<std::size_t>(v.id)].value);
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(v.id)].requires_grad;
  }
  n.value = compute(kind, vals, aux);
  n.aux = std::move(aux);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

std::vector<Matrix> Tape::replay() const {
  std::vector<Matrix> out;
  out.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::kLeaf) {
      out.push_back(n.value);
      continue;
    }
    Inputs vals;
    for (int id : n.inputs) vals.push_back(&out[static_cast<std::size_t>(id)]);
    out.push_back(compute(n.kind, vals, n.aux));
  }
  return out;
}

Matrix Gradients::of(Var v) const {
  const auto i = static_cast<std::size_t>(v.id);
  if (i < grads_.size() && !grads_[i].empty()) return grads_[i];
  return Matrix(v.rows(), v.cols());
}

bool Gradients::reached(Var v) const {
  const auto i = static_cast<std::size_t>(v.id);
  return i < grads_.size() && !grads_[i].empty();
}

Gradients backward(const Tape& tape, Var loss) {
  if (loss.tape != &tape) throw Error(ErrorCode::kInternal, "backward: loss from another tape");
  const Matrix& lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backward: loss must be 1x1, got " + lv.shape_string());

  std::vector<Matrix> grads(tape.size());
  grads[static_cast<std::size_t>(loss.id)] = Matrix::scalar(1.0);
  const auto& kern = kernels::active();

  for (int id = loss.id; id >= 0; --id) {
    const Node& n = tape.node(id);
    Matrix& g = grads[static_cast<std::size_t>(id)];
    if (g.empty() || n.kind == OpKind::kLeaf || !n.requires_grad) continue;

    auto input = [&](std::size_t k) -> const Node& { return tape.node(n.inputs[k]); };
    auto wants = [&](std::size_t k) { return input(k).requires_grad; };
    auto push = [&](std::size_t k, const Matrix& contrib) {
      accumulate_into(grads[static_cast<std::size_t>(n.inputs[k])], contrib);
    };
    const Matrix& y = n.value;

    switch (n.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kMatMul: {
        if (wants(0)) push(0, gemm_nt(g, input(1).value));
        if (wants(1)) push(1, gemm_tn(input(0).value, g));
        break;
      }
      case OpKind::kTranspose:
        push(0, g.transposed());
        break;
      case OpKind::kAdd:
      case OpKind::kSub: {
        const Matrix& a = input(0).value;
        const Matrix& b = input(1).value;
        const Broadcast bk = broadcast_kind(n.kind, a, b);
        if (wants(0)) push(0, g);
        if (wants(1)) {
          Matrix gb = reduce_to(g, b, bk);
          if (n.kind == OpKind::kSub) kern.scale(-1.0, gb.data(), gb.data(), gb.size());
          push(1, gb);
        }
        break;
      }
      case OpKind::kMul: {
        const Matrix& a = input(0).value;
        const Matrix& b = input(1).value;
        const Broadcast bk = broadcast_kind(n.kind, a, b);
        if (wants(0)) {
          if (bk == Broadcast::kSame) {
            Matrix ga(g.rows(), g.cols());
            kern.mul(g.data(), b.data(), ga.data(), g.size());
            push(0, ga);
          } else {
            push(0, broadcast_apply(g, b, bk, [](double x, double w) { return x * w; }));
          }
        }
        if (wants(1)) {
          Matrix ga(g.rows(), g.cols());
          kern.mul(g.data(), a.data(), ga.data(), g.size());
          push(1, reduce_to(ga, b, bk));
        }
        break;
      }
      case OpKind::kScale: {
        Matrix ga(g.rows(), g.cols());
        kern.scale(n.aux.scalar, g.data(), ga.data(), g.size());
        push(0, ga);
        break;
      }
      case OpKind::kAddScalar:
        push(0, g);
        break;
      case OpKind::kSigmoid: {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (y[i] * (1.0 - y[i]));
        push(0, ga);
        break;
      }
      case OpKind::kTanh: {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (1.0 - y[i] * y[i]);
        push(0, ga);
        break;
      }
      case OpKind::kRelu: {
        const Matrix& x = input(0).value;
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = x[i] > 0.0 ? g[i] : 0.0;
        push(0, ga);
        break;
      }
      case OpKind::kExp: {
        Matrix ga(g.rows(), g.cols());
        kern.mul(g.data(), y.data(), ga.data(), g.size());
        push(0, ga);
        break;
      }
      case OpKind::kLog: {
        const Matrix& x = input(0).value;
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / x[i];
        push(0, ga);
        break;
      }
      case OpKind::kSqrt: {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = y[i] > 0.0 ? g[i] / (2.0 * y[i]) : 0.0;
        push(0, ga);
        break;
      }
      case OpKind::kSquare: {
        const Matrix& x = input(0).value;
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (2.0 * x[i]);
        push(0, ga);
        break;
      }
      case OpKind::kXLogX: {
        const Matrix& x = input(0).value;
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = x[i] > 0.0 ? g[i] * (std::log(x[i]) + 1.0) : 0.0;
        push(0, ga);
        break;
      }
      case OpKind::kSum:
      case OpKind::kMean: {
        const Matrix& x = input(0).value;
        double s = g[0];
        if (n.kind == OpKind::kMean) s /= static_cast<double>(x.size());
        push(0, Matrix(x.rows(), x.cols(), s));
        break;
      }
      case OpKind::kRowSum: {
        const Matrix& x = input(0).value;
        Matrix ga(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) ga(r, c) = g(r, 0);
        push(0, ga);
        break;
      }
      case OpKind::kColSum: {
        const Matrix& x = input(0).value;
        Matrix ga(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) std::copy(g.data(), g.data() + g.size(), ga.data() + r * x.cols());
        push(0, ga);
        break;
      }
      case OpKind::kConcatRows: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Matrix& part = input(k).value;
          if (wants(k)) {
            Matrix gp(part.rows(), part.cols());
            std::copy(g.data() + off, g.data() + off + part.size(), gp.data());
            push(k, gp);
          }
          off += part.size();
        }
        break;
      }
      case OpKind::kConcatCols: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Matrix& part = input(k).value;
          if (wants(k)) {
            Matrix gp(part.rows(), part.cols());
            for (std::size_t r = 0; r < part.rows(); ++r)
              std::copy(g.data() + r * g.cols() + off, g.data() + r * g.cols() + off + part.cols(),
                        gp.data() + r * part.cols());
            push(k, gp);
          }
          off += part.cols();
        }
        break;
      }
      case OpKind::kSliceRows: {
        const Matrix& x = input(0).value;
        Matrix ga(x.rows(), x.cols());
        std::copy(g.data(), g.data() + g.size(), ga.data() + n.aux.a * x.cols());
        push(0, ga);
        break;
      }
      case OpKind::kGatherRows: {
        const Matrix& x = input(0).value;
        const auto& idx = *n.aux.index;
        Matrix ga(x.rows(), x.cols());
        for (std::size_t e = 0; e < idx.size(); ++e)
          kern.accumulate(g.data() + e * x.cols(), ga.data() + idx[e] * x.cols(), x.cols());
        push(0, ga);
        break;
      }
      case OpKind::kScatter: {
        const Matrix& v = input(0).value;
        const auto& pos = *n.aux.index;
        const std::size_t per = n.aux.a;
        Matrix ga(v.rows(), 1);
        for (std::size_t e = 0; e < v.rows(); ++e) {
          double s = 0.0;
          for (std::size_t t = 0; t < per; ++t) s += g[pos[e * per + t]];
          ga[e] = s;
        }
        push(0, ga);
        break;
      }
      case OpKind::kTileRows: {
        const Matrix& x = input(0).value;
        Matrix ga(x.rows(), x.cols());
        for (std::size_t t = 0; t < n.aux.a; ++t) kern.accumulate(g.data() + t * x.size(), ga.data(), x.size());
        push(0, ga);
        break;
      }
      case OpKind::kBlockSum: {
        const Matrix& x = input(0).value;
        Matrix ga(x.rows(), x.cols());
        for (std::size_t blk = 0; blk < n.aux.a; ++blk)
          std::copy(g.data(), g.data() + g.size(), ga.data() + blk * g.size());
        push(0, ga);
        break;
      }
      case OpKind::kBlockColSum: {
        const Matrix& x = input(0).value;
        const std::size_t r = x.rows() / n.aux.a;
        Matrix ga(x.rows(), x.cols());
        for (std::size_t blk = 0; blk < n.aux.a; ++blk)
          for (std::size_t i = 0; i < r; ++i)
            std::copy(g.data() + blk * x.cols(), g.data() + (blk + 1) * x.cols(), ga.data() + (blk * r + i) * x.cols());
        push(0, ga);
        break;
      }
      case OpKind::kBlockMatMul:
      case OpKind::kBlockMatMulNT: {
        const Matrix& a = input(0).value;
        const Matrix& b = input(1).value;
        const std::size_t blocks = n.aux.a;
        const std::size_t p = a.rows() / blocks;
        const std::size_t q = b.rows() / blocks;
        const bool nt = n.kind == OpKind::kBlockMatMulNT;
        Matrix ga(a.rows(), a.cols());
        Matrix gb(b.rows(), b.cols());
        for (std::size_t blk = 0; blk < blocks; ++blk) {
          Matrix ab(p, a.cols(), std::vector<double>(a.data() + blk * p * a.cols(), a.data() + (blk + 1) * p * a.cols()));
          Matrix bb(q, b.cols(), std::vector<double>(b.data() + blk * q * b.cols(), b.data() + (blk + 1) * q * b.cols()));
          Matrix gblk(p, g.cols(), std::vector<double>(g.data() + blk * p * g.cols(), g.data() + (blk + 1) * p * g.cols()));
          // out = a·b  : da = g·bᵀ, db = aᵀ·g
          // out = a·bᵀ : da = g·b,  db = gᵀ·a
          if (wants(0)) {
            const Matrix da = nt ? gemm(gblk, bb) : gemm_nt(gblk, bb);
            std::copy(da.data(), da.data() + da.size(), ga.data() + blk * p * a.cols());
          }
          if (wants(1)) {
            const Matrix db = nt ? gemm_tn(gblk, ab) : gemm_tn(ab, gblk);
            std::copy(db.data(), db.data() + db.size(), gb.data() + blk * q * b.cols());
          }
        }
        if (wants(0)) push(0, ga);
        if (wants(1)) push(1, gb);
        break;
      }
      case OpKind::kDropout: {
        Matrix ga(g.rows(), g.cols());
        kern.mul(g.data(), n.aux.constant->data(), ga.data(), g.size());
        push(0, ga);
        break;
      }
      case OpKind::kBatchNorm: {
        const Matrix& x = input(0).value;
        const BatchNormParts parts = batch_norm_parts(x, n.aux);
        const std::size_t r = x.rows();
        const std::size_t c = x.cols();
        Matrix ga(r, c);
        if (!n.aux.flag) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga(i, j) = g(i, j) * parts.inv_std[j];
        } else {
          std::vector<double> sum_g(c, 0.0);
          std::vector<double> sum_gx(c, 0.0);
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              sum_g[j] += g(i, j);
              sum_gx[j] += g(i, j) * parts.xhat(i, j);
            }
          }
          const double rn = static_cast<double>(r);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              ga(i, j) = parts.inv_std[j] / rn * (rn * g(i, j) - sum_g[j] - parts.xhat(i, j) * sum_gx[j]);
        }
        push(0, ga);
        break;
      }
      case OpKind::kSoftmaxCrossEntropy: {
        const Matrix& z = input(0).value;
        const auto& labels = *n.aux.index;
        Matrix p = softmax_rows(z);
        const double s = g[0] / static_cast<double>(z.rows());
        for (std::size_t i = 0; i < z.rows(); ++i) {
          p(i, labels[i]) -= 1.0;
          for (std::size_t j = 0; j < z.cols(); ++j) p(i, j) *= s;
        }
        push(0, p);
        break;
      }
    }
  }
  return Gradients(std::move(grads));
}

ColumnStats column_stats(const Matrix& x) {
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  ColumnStats st{Matrix(1, c), Matrix(1, c), Matrix(1, c)};
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) st.mean[j] += x(i, j);
  for (std::size_t j = 0; j < c; ++j) st.mean[j] /= static_cast<double>(r);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x(i, j) - st.mean[j];
      st.biased_var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < c; ++j) {
    const double ss = st.biased_var[j];
    st.biased_var[j] = ss / static_cast<double>(r);
    st.unbiased_var[j] = r > 1 ? ss / static_cast<double>(r - 1) : ss;
  }
  return st;
}

// ---- primitive constructors ----

namespace {

Var unary(OpKind kind, Var a, OpAux aux = {}) {
  const Var in[] = {a};
  return a.tape->apply(kind, in, std::move(aux));
}

Var binary(OpKind kind, Var a, Var b, OpAux aux = {}) {
  const Var in[] = {a, b};
  return a.tape->apply(kind, in, std::move(aux));
}

}  // namespace

Var matmul(Var a, Var b) { return binary(OpKind::kMatMul, a, b); }
Var transpose(Var a) { return unary(OpKind::kTranspose, a); }
Var add(Var a, Var b) { return binary(OpKind::kAdd, a, b); }
Var sub(Var a, Var b) { return binary(OpKind::kSub, a, b); }
Var mul(Var a, Var b) { return binary(OpKind::kMul, a, b); }

Var scale(Var a, double factor) {
  OpAux aux;
  aux.scalar = factor;
  return unary(OpKind::kScale, a, std::move(aux));
}

Var add_scalar(Var a, double offset) {
  OpAux aux;
  aux.scalar = offset;
  return unary(OpKind::kAddScalar, a, std::move(aux));
}

Var sigmoid(Var a) { return unary(OpKind::kSigmoid, a); }
Var tanh(Var a) { return unary(OpKind::kTanh, a); }
Var relu(Var a) { return unary(OpKind::kRelu, a); }
Var exp(Var a) { return unary(OpKind::kExp, a); }
Var log(Var a) { return unary(OpKind::kLog, a); }
Var sqrt(Var a) { return unary(OpKind::kSqrt, a); }
Var square(Var a) { return unary(OpKind::kSquare, a); }
Var xlogx(Var a) { return unary(OpKind::kXLogX, a); }
Var sum(Var a) { return unary(OpKind::kSum, a); }
Var mean(Var a) { return unary(OpKind::kMean, a); }
Var row_sum(Var a) { return unary(OpKind::kRowSum, a); }
Var col_sum(Var a) { return unary(OpKind::kColSum, a); }

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  return parts.front().tape->apply(OpKind::kConcatRows, parts);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  return parts.front().tape->apply(OpKind::kConcatCols, parts);
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  OpAux aux;
  aux.a = start;
  aux.b = count;
  return unary(OpKind::kSliceRows, a, std::move(aux));
}

Var gather_rows(Var a, std::shared_ptr<const std::vector<std::size_t>> rows) {
  OpAux aux;
  aux.index = std::move(rows);
  return unary(OpKind::kGatherRows, a, std::move(aux));
}

Var scatter(Var values, std::shared_ptr<const std::vector<std::size_t>> positions, std::size_t per_value,
            std::size_t rows, std::size_t cols) {
  OpAux aux;
  aux.index = std::move(positions);
  aux.a = per_value;
  aux.b = rows;
  aux.c = cols;
  return unary(OpKind::kScatter, values, std::move(aux));
}

Var tile_rows(Var a, std::size_t reps) {
  OpAux aux;
  aux.a = reps;
  return unary(OpKind::kTileRows, a, std::move(aux));
}

Var block_sum(Var a, std::size_t blocks) {
  OpAux aux;
  aux.a = blocks;
  return unary(OpKind::kBlockSum, a, std::move(aux));
}

Var block_col_sum(Var a, std::size_t blocks) {
  OpAux aux;
  aux.a = blocks;
  return unary(OpKind::kBlockColSum, a, std::move(aux));
}

Var block_matmul(Var a, Var b, std::size_t blocks) {
  OpAux aux;
  aux.a = blocks;
  return binary(OpKind::kBlockMatMul, a, b, std::move(aux));
}

Var block_matmul_nt(Var a, Var b, std::size_t blocks) {
  OpAux aux;
  aux.a = blocks;
  return binary(OpKind::kBlockMatMulNT, a, b, std::move(aux));
}

Var dropout(Var a, std::shared_ptr<const Matrix> mask) {
  OpAux aux;
  aux.constant = std::move(mask);
  return unary(OpKind::kDropout, a, std::move(aux));
}

Var batch_norm(Var a, bool training, double eps, std::shared_ptr<const Matrix> running) {
  OpAux aux;
  aux.flag = training;
  aux.scalar = eps;
  aux.constant = std::move(running);
  return unary(OpKind::kBatchNorm, a, std::move(aux));
}

Var softmax_cross_entropy(Var logits, std::shared_ptr<const std::vector<std::size_t>> labels) {
  OpAux aux;
  aux.index = std::move(labels);
  return unary(OpKind::kSoftmaxCrossEntropy, logits, std::move(aux));
}

}  // namespace brainood::ad
