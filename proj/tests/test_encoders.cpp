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

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "brainood/common/error.hpp"
#include "brainood/diffcore/gradcheck.hpp"
#include "brainood/model/encoders.hpp"
#include "brainood/model/selector.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace brainood;
using namespace brainood::model;
using brainood::testing::random_adjacency;
using brainood::testing::random_matrix;
using brainood::testing::random_symmetric;

namespace {

constexpr std::size_t kTensorsPerLayer = 7;

// lin1.w, lin1.b, lin2.w, lin2.b, eps, gamma, beta per layer.
std::vector<Matrix> random_gin(std::size_t in, std::size_t d, std::size_t layers, Rng& rng) {
  std::vector<Matrix> t;
  for (std::size_t l = 0; l < layers; ++l) {
    t.push_back(random_matrix(l == 0 ? in : d, d, rng));
    t.push_back(random_matrix(1, d, rng));
    t.push_back(random_matrix(d, d, rng));
    t.push_back(random_matrix(1, d, rng));
    t.push_back(random_matrix(1, 1, rng, -0.5, 0.5));
    t.push_back(random_matrix(1, d, rng, 0.5, 1.5));
    t.push_back(random_matrix(1, d, rng));
  }
  return t;
}

GinParams bind_gin(std::span<const ad::Var> vars, double dropout) {
  GinParams p;
  p.dropout = dropout;
  for (std::size_t l = 0; l * kTensorsPerLayer < vars.size(); ++l) {
    const ad::Var* v = vars.data() + l * kTensorsPerLayer;
    Matrix running(2, v[0].cols());
    for (std::size_t c = 0; c < running.cols(); ++c) running(1, c) = 1.0;
    p.layers.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], std::make_shared<const Matrix>(running)});
  }
  return p;
}

std::vector<ad::Var> as_constants(ad::Tape& tape, const std::vector<Matrix>& ms) {
  std::vector<ad::Var> v;
  for (const Matrix& m : ms) v.push_back(tape.constant(m));
  return v;
}

// Evaluation-mode GIN with fresh running statistics, aggregating each neighbour
// by repeated addition (weights must be non-negative integers).
Matrix naive_gin(const Matrix& x, const Matrix& weights, const std::vector<Matrix>& t, double bn_eps) {
  Matrix h = x;
  for (std::size_t l = 0; l * kTensorsPerLayer < t.size(); ++l) {
    const Matrix* p = t.data() + l * kTensorsPerLayer;
    const std::size_t n = h.rows(), f = h.cols(), d = p[0].cols();
    Matrix next(n, d);
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<double> agg(f);
      for (std::size_t c = 0; c < f; ++c) agg[c] = (1.0 + p[4].item()) * h(v, c);
      for (std::size_t u = 0; u < n; ++u)
        for (int rep = 0; rep < static_cast<int>(weights(v, u)); ++rep)
          for (std::size_t c = 0; c < f; ++c) agg[c] += h(u, c);
      std::vector<double> hid(d);
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < f; ++c) s += agg[c] * p[0](c, j);
        hid[j] = std::max(0.0, s + p[1](0, j));
      }
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += hid[c] * p[2](c, j);
        const double z = (s + p[3](0, j)) / std::sqrt(1.0 + bn_eps);
        next(v, j) = std::max(0.0, z * p[5](0, j) + p[6](0, j));
      }
    }
    h = next;
  }
  return h;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& p) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(p[i], j);
  return out;
}

Matrix permute_both(const Matrix& m, const std::vector<std::size_t>& p) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(p[i], p[j]);
  return out;
}

Matrix stack(const std::vector<Matrix>& parts) {
  Matrix out(parts.size() * parts[0].rows(), parts[0].cols());
  for (std::size_t b = 0; b < parts.size(); ++b)
    std::copy(parts[b].data(), parts[b].data() + parts[b].size(), out.data() + b * parts[0].size());
  return out;
}

}  // namespace

TEST_CASE("GIN without neighbours is a per-node MLP") {
  Rng rng(11);
  const std::size_t n = 6, d = 4;
  const Matrix x = random_symmetric(n, rng);
  std::vector<Matrix> t = random_gin(n, d, 2, rng);
  t[4] = Matrix(1, 1);
  t[kTensorsPerLayer + 4] = Matrix(1, 1);
  ad::Tape tape;
  const auto vars = as_constants(tape, t);
  const Matrix h = gin_encode(tape.constant(x), tape.constant(Matrix(n, n)), bind_gin(vars, 0.5), 1, Mode::kEval, rng).value();
  const Matrix ref = naive_gin(x, Matrix(n, n), t, 1e-5);
  CHECK(max_abs_diff(h, ref) < 1e-12);
}

TEST_CASE("integer edge weights equal duplicated neighbours") {
  Rng rng(12);
  const std::size_t n = 7, d = 5;
  std::uniform_int_distribution<int> w(0, 3);
  Matrix weights(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) weights(i, j) = weights(j, i) = w(rng);
  const Matrix x = random_symmetric(n, rng);
  const std::vector<Matrix> t = random_gin(n, d, 2, rng);
  ad::Tape tape;
  const Matrix h =
      gin_encode(tape.constant(x), tape.constant(weights), bind_gin(as_constants(tape, t), 0.5), 1, Mode::kEval, rng)
          .value();
  CHECK(max_abs_diff(h, naive_gin(x, weights, t, 1e-5)) < 1e-12);
}

TEST_CASE("GIN is permutation equivariant") {
  Rng rng(13);
  const std::size_t n = 9, d = 4;
  const Matrix x = random_symmetric(n, rng);
  const Matrix a = random_adjacency(n, 0.4, rng);
  const std::vector<Matrix> t = random_gin(n, d, 2, rng);
  for (Mode mode : {Mode::kEval, Mode::kTrain}) {
    ad::Tape tape;
    const GinParams p = bind_gin(as_constants(tape, t), 0.0);
    const Matrix h = gin_encode(tape.constant(x), tape.constant(a), p, 1, mode, rng).value();
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const Matrix hp =
          gin_encode(tape.constant(permute_rows(x, perm)), tape.constant(permute_both(a, perm)), p, 1, mode, rng).value();
      worst = std::max(worst, max_abs_diff(hp, permute_rows(h, perm)));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("batched GIN in evaluation mode equals per-subject calls") {
  Rng rng(14);
  const std::size_t n = 6, d = 3, b = 3;
  std::vector<Matrix> xs, as;
  for (std::size_t i = 0; i < b; ++i) {
    xs.push_back(random_symmetric(n, rng));
    as.push_back(random_adjacency(n, 0.5, rng));
  }
  const std::vector<Matrix> t = random_gin(n, d, 2, rng);
  ad::Tape tape;
  const GinParams p = bind_gin(as_constants(tape, t), 0.5);
  const Matrix all = gin_encode(tape.constant(stack(xs)), tape.constant(stack(as)), p, b, Mode::kEval, rng).value();
  for (std::size_t i = 0; i < b; ++i) {
    const Matrix one = gin_encode(tape.constant(xs[i]), tape.constant(as[i]), p, 1, Mode::kEval, rng).value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) CHECK(all(i * n + r, c) == one(r, c));
  }
}

TEST_CASE("training-mode batch norm reports the statistics it used") {
  Rng rng(15);
  const std::size_t n = 5, d = 3;
  const std::vector<Matrix> t = random_gin(n, d, 2, rng);
  ad::Tape tape;
  std::vector<BatchNormObservation> seen;
  gin_encode(tape.constant(random_symmetric(n, rng)), tape.constant(random_adjacency(n, 0.5, rng)),
             bind_gin(as_constants(tape, t), 0.5), 1, Mode::kTrain, rng, &seen);
  REQUIRE(seen.size() == 2);
  CHECK(seen[0].layer == 0);
  CHECK(seen[1].layer == 1);
  for (const auto& s : seen)
    for (double v : s.unbiased_var.values()) CHECK(v >= 0.0);
}

TEST_CASE("GIN rejects mismatched shapes") {
  Rng rng(16);
  ad::Tape tape;
  const GinParams p = bind_gin(as_constants(tape, random_gin(4, 2, 1, rng)), 0.0);
  CHECK_THROWS_AS(gin_encode(tape.constant(Matrix(4, 4)), tape.constant(Matrix(5, 5)), p, 1, Mode::kEval, rng), ShapeError);
  CHECK_THROWS_AS(gin_encode(tape.constant(Matrix(8, 4)), tape.constant(Matrix(8, 4)), p, 3, Mode::kEval, rng), ShapeError);
}

TEST_CASE("high-pass layer removes a constant signal with identity weight") {
  const std::size_t n = 6, d = 3;
  Rng rng(17);
  Matrix a = random_adjacency(n, 0.6, rng);
  for (std::size_t j = 0; j < n; ++j) a(0, j) = a(j, 0) = 0.0;  // node 0 isolated
  Matrix h(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) h(i, c) = 0.25 * static_cast<double>(c + 1);
  ad::Tape tape;
  const Matrix out = hpgnn_encode(tape.constant(h), a, {tape.constant(Matrix::identity(d))}, 1).value();
  for (std::size_t i = 0; i < n; ++i) {
    bool isolated = true;
    for (std::size_t j = 0; j < n; ++j) isolated &= a(i, j) == 0.0;
    for (std::size_t c = 0; c < d; ++c) CHECK(out(i, c) == (isolated ? h(i, c) : 0.0));
  }
}

TEST_CASE("high-pass layer on an edgeless graph is the identity") {
  Rng rng(18);
  const Matrix h = random_matrix(5, 3, rng);
  ad::Tape tape;
  const Matrix out = hpgnn_encode(tape.constant(h), Matrix(5, 5), {tape.constant(random_matrix(3, 3, rng))}, 1).value();
  CHECK(out.bitwise_equal(h));
}

TEST_CASE("high-pass layer matches a per-node loop") {
  Rng rng(19);
  const std::size_t n = 8, d = 4, b = 2;
  const Matrix a = stack({random_adjacency(n, 0.4, rng), random_adjacency(n, 0.4, rng)});
  const Matrix h = random_matrix(b * n, d, rng);
  const Matrix w = random_matrix(d, d, rng);
  ad::Tape tape;
  const Matrix out = hpgnn_encode(tape.constant(h), a, {tape.constant(w)}, b).value();
  for (std::size_t blk = 0; blk < b; ++blk)
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<double> mean(d, 0.0);
      double deg = 0.0;
      for (std::size_t u = 0; u < n; ++u)
        if (a(blk * n + v, u) != 0.0) {
          deg += 1.0;
          for (std::size_t c = 0; c < d; ++c) mean[c] += h(blk * n + u, c);
        }
      for (std::size_t c = 0; c < d; ++c) {
        double wm = 0.0;
        if (deg > 0.0)
          for (std::size_t k = 0; k < d; ++k) wm += mean[k] / deg * w(k, c);
        CHECK(std::fabs(out(blk * n + v, c) - (h(blk * n + v, c) - wm)) < 1e-12);
      }
    }
}

TEST_CASE("reconstruction examples") {
  ad::Tape tape;
  const Matrix ones(4, 4, 1.0);
  CHECK(max_abs(reconstruct(tape.constant(Matrix(4, 3)), tape.constant(ones), 1).value()) == 0.0);

  Matrix onehot(4, 4);
  for (std::size_t i = 0; i < 4; ++i) onehot(i, i) = 1.0;
  const Matrix xh = reconstruct(tape.constant(onehot), tape.constant(ones), 1).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(xh(i, j) == (i == j ? std::tanh(1.0) : 0.0));
  CHECK(std::fabs(std::tanh(1.0) - 0.7616) < 1e-4);
}

TEST_CASE("reconstruction is exactly symmetric under a symmetric mask") {
  Rng rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    ad::Tape tape;
    const Matrix m = random_symmetric(6, rng, 0.0, 1.0);
    const Matrix xh = reconstruct(tape.constant(random_matrix(6, 3, rng)), tape.constant(m), 1).value();
    CHECK(xh.bitwise_equal(xh.transposed()));
    for (double v : xh.values()) CHECK(std::fabs(v) < 1.0);
  }
}

TEST_CASE("reconstruction loss examples") {
  Rng rng(21);
  ad::Tape tape;
  const Matrix x = random_matrix(5, 5, rng);
  CHECK(recon_loss(tape.constant(x), tape.constant(x), 1).item() == 0.0);

  Matrix shifted = x;
  for (double& v : shifted.values()) v += 0.5;
  CHECK(std::fabs(recon_loss(tape.constant(shifted), tape.constant(x), 1).item() - 5.0 * 0.25) < 1e-12);

  const Matrix y = random_matrix(5, 5, rng);
  double naive = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) naive += (x(i, j) - y(i, j)) * (x(i, j) - y(i, j));
  const double loss = recon_loss(tape.constant(x), tape.constant(y), 1).item();
  CHECK(loss > 0.0);
  CHECK(std::fabs(loss - naive / 5.0) < 1e-12);
  CHECK_THROWS_AS(recon_loss(tape.constant(x), tape.constant(Matrix(5, 4)), 1), ShapeError);
}

TEST_CASE("two-layer GIN with cross-entropy passes a gradient check") {
  Rng rng(22);
  const std::size_t n = 8, d = 4, b = 2;
  const Matrix x = stack({random_symmetric(n, rng), random_symmetric(n, rng)});
  const Matrix a = stack({random_adjacency(n, 0.4, rng), random_adjacency(n, 0.4, rng)});
  std::vector<NamedTensor> params;
  int idx = 0;
  for (Matrix& m : random_gin(n, d, 2, rng)) params.push_back({"gin" + std::to_string(idx++), std::move(m)});
  params.push_back({"head.weight", random_matrix(d, 2, rng)});
  const auto labels = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{0, 1});
  const auto report = gradient_check(
      [&](ad::Tape& tape, std::span<const ad::Var> p) {
        Rng noise(5);
        const GinParams gin = bind_gin(p.first(2 * kTensorsPerLayer), 0.5);
        const ad::Var h = gin_encode(tape.constant(x), tape.constant(a), gin, b, Mode::kTrain, noise);
        return ad::softmax_cross_entropy(ad::matmul(ad::block_col_sum(h, b), p.back()), labels);
      },
      params, 1e-5, 1e-4);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("reconstruction objective gradients reach mask, GIN and high-pass weights") {
  Rng rng(23);
  const std::size_t n = 8, d = 4;
  const Matrix x = random_symmetric(n, rng);
  const Matrix a = random_adjacency(n, 0.4, rng);
  std::vector<NamedTensor> params{{"mask.weight", random_matrix(n, d, rng)}, {"hpgnn.weight", random_matrix(d, d, rng)}};
  int idx = 0;
  for (Matrix& m : random_gin(n, d, 2, rng)) params.push_back({"gin" + std::to_string(idx++), std::move(m)});
  const auto report = gradient_check(
      [&](ad::Tape& tape, std::span<const ad::Var> p) {
        Rng noise(6);
        const MaskOutput m = apply_mask(tape.constant(x), {p[0], 0.2}, 1, Mode::kTrain, noise);
        const ad::Var h = gin_encode(m.x_masked, tape.constant(a), bind_gin(p.subspan(2), 0.5), 1, Mode::kTrain, noise);
        const ad::Var xh = reconstruct(hpgnn_encode(h, a, {p[1]}, 1), m.mask, 1);
        return ad::scale(recon_loss(xh, m.x_masked, 1), 0.1);
      },
      params, 1e-5, 1e-4);
  for (const auto& e : report.entries) {
    CAPTURE(e.name);
    CHECK(e.max_rel_error < 1e-4);
  }
  CHECK(report.passed);
}
