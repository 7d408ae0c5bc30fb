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

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "brainood/diffcore/matrix.hpp"

namespace brainood::ad {

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kSigmoid,
  kTanh,
  kRelu,
  kExp,
  kLog,
  kSqrt,
  kSquare,
  kXLogX,
  kSum,
  kMean,
  kRowSum,
  kColSum,
  kConcatRows,
  kConcatCols,
  kSliceRows,
  kGatherRows,
  kScatter,
  kTileRows,
  kBlockSum,
  kBlockColSum,
  kBlockMatMul,
  kBlockMatMulNT,
  kDropout,
  kBatchNorm,
  kSoftmaxCrossEntropy,
};

const char* op_name(OpKind kind);

/// Non-tensor arguments of a primitive. Which fields are meaningful depends on the op.
struct OpAux {
  double scalar = 0.0;
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t c = 0;
  bool flag = false;
  std::shared_ptr<const std::vector<std::size_t>> index;
  std::shared_ptr<const Matrix> constant;
};

struct Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<int> inputs;
  Matrix value;
  OpAux aux;
  bool requires_grad = false;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives gradients.
  Var variable(Matrix value);
  /// Leaf that does not.
  Var constant(Matrix value);

  /// Applies a primitive to values already on this tape and appends the node.
  Var apply(OpKind kind, std::span<const Var> inputs, OpAux aux = {});

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }

  /// Recomputes every node from the recorded leaves, in tape order.
  std::vector<Matrix> replay() const;

 private:
  std::vector<Node> nodes_;
};

/// Gradients of a scalar loss with respect to every node that requires them.
class Gradients {
 public:
  explicit Gradients(std::vector<Matrix> per_node) : grads_(std::move(per_node)) {}

  /// Zero matrix of the node's shape if the loss does not depend on it.
  Matrix of(Var v) const;
  bool reached(Var v) const;

 private:
  friend Gradients backward(const Tape& tape, Var loss);
  std::vector<Matrix> grads_;
};

/// Reverse sweep from `loss` (must be 1×1). Leaves the tape unchanged.
Gradients backward(const Tape& tape, Var loss);

// Primitive constructors. Shapes are validated; violations throw ShapeError naming
// the op and the offending shapes. Log/Sqrt/XLogX throw DomainError outside their domain.

Var matmul(Var a, Var b);
Var transpose(Var a);
/// b may match a, or be 1×1, 1×cols(a), or rows(a)×1 (broadcast).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
/// Gradient at 0 is taken as 0.
Var sqrt(Var a);
Var square(Var a);
/// x·log x elementwise with 0·log 0 = 0.
Var xlogx(Var a);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var col_sum(Var a);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var gather_rows(Var a, std::shared_ptr<const std::vector<std::size_t>> rows);
/// out[rows×cols] is zero except out[pos] = values[e] for each of the `per_value`
/// flat positions listed for entry e. Positions must be distinct.
Var scatter(Var values, std::shared_ptr<const std::vector<std::size_t>> positions, std::size_t per_value,
            std::size_t rows, std::size_t cols);
Var tile_rows(Var a, std::size_t reps);
/// (B·r)×c → r×c, sum of the B row blocks.
Var block_sum(Var a, std::size_t blocks);
/// (B·r)×c → B×c, column sums within each row block.
Var block_col_sum(Var a, std::size_t blocks);
/// Per-block product: block i of a (p×q) times block i of b (q×r).
Var block_matmul(Var a, Var b, std::size_t blocks);
/// Per-block product with the second block transposed: a_i (p×r) · b_i (q×r)ᵀ.
Var block_matmul_nt(Var a, Var b, std::size_t blocks);
/// Elementwise product with a stored mask (already carrying the inverted-dropout scale).
Var dropout(Var a, std::shared_ptr<const Matrix> mask);
/// Column-wise normalisation. Training uses batch statistics; evaluation uses
/// `running` (row 0 = mean, row 1 = variance).
Var batch_norm(Var a, bool training, double eps, std::shared_ptr<const Matrix> running = nullptr);
/// Mean softmax cross-entropy of logits (B×C) against class indices.
Var softmax_cross_entropy(Var logits, std::shared_ptr<const std::vector<std::size_t>> labels);

/// Column mean and unbiased variance of a matrix with the same reduction order as batch_norm.
struct ColumnStats {
  Matrix mean;
  Matrix biased_var;
  Matrix unbiased_var;
};
ColumnStats column_stats(const Matrix& x);

}  // namespace brainood::ad
