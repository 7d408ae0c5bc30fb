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

#include "brainood/model/encoders.hpp"

#include <string>

#include "brainood/common/error.hpp"
#include "brainood/diffcore/random.hpp"

namespace brainood::model {

ad::Var gin_encode(ad::Var x, ad::Var weights, const GinParams& params, std::size_t blocks, Mode mode, Rng& rng,
                   std::vector<BatchNormObservation>* observed) {
  if (blocks == 0 || x.rows() % blocks != 0 || weights.rows() != x.rows() || weights.cols() * blocks != x.rows())
    throw ShapeError("gin_encode: features " + x.value().shape_string() + " and edge weights " +
                     weights.value().shape_string() + " do not describe " + std::to_string(blocks) + " graphs");
  ad::Var h = x;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const GinLayerParams& layer = params.layers[l];
    const ad::Var self = ad::mul(h, ad::add_scalar(layer.epsilon, 1.0));
    const ad::Var agg = ad::add(self, ad::block_matmul(weights, h, blocks));
    const ad::Var hidden = ad::relu(ad::add(ad::matmul(agg, layer.lin1_w), layer.lin1_b));
    const ad::Var z = ad::add(ad::matmul(hidden, layer.lin2_w), layer.lin2_b);
    const bool training = mode == Mode::kTrain;
    if (training && observed != nullptr) {
      const ad::ColumnStats st = ad::column_stats(z.value());
      observed->push_back({l, st.mean, st.unbiased_var});
    }
    const ad::Var normed = ad::batch_norm(z, training, params.bn_eps, training ? nullptr : layer.bn_running);
    h = ad::relu(ad::add(ad::mul(normed, layer.bn_gamma), layer.bn_beta));
    if (training && params.dropout > 0.0)
      h = ad::dropout(h, std::make_shared<const Matrix>(dropout_mask(h.rows(), h.cols(), params.dropout, rng)));
  }
  return h;
}

Matrix mean_aggregation_weights(const Matrix& adjacency_stack, std::size_t blocks) {
  const std::size_t n = adjacency_stack.cols();
  if (blocks == 0 || adjacency_stack.rows() != n * blocks)
    throw ShapeError("mean_aggregation_weights: adjacency stack " + adjacency_stack.shape_string());
  Matrix w(adjacency_stack.rows(), n);
  for (std::size_t r = 0; r < adjacency_stack.rows(); ++r) {
    double degree = 0.0;
    for (std::size_t c = 0; c < n; ++c) degree += adjacency_stack(r, c);
    if (degree == 0.0) continue;
    for (std::size_t c = 0; c < n; ++c) w(r, c) = adjacency_stack(r, c) / degree;
  }
  return w;
}

ad::Var hpgnn_encode(ad::Var h, const Matrix& adjacency_stack, const HpgnnParams& params, std::size_t blocks) {
  if (h.rows() != adjacency_stack.rows() || params.w.rows() != h.cols() || params.w.cols() != h.cols())
    throw ShapeError("hpgnn_encode: representations " + h.value().shape_string() + ", adjacency " +
                     adjacency_stack.shape_string() + ", weight " + params.w.value().shape_string());
  const ad::Var mean_w = h.tape->constant(mean_aggregation_weights(adjacency_stack, blocks));
  const ad::Var neighbours = ad::block_matmul(mean_w, h, blocks);
  return ad::sub(h, ad::matmul(neighbours, params.w));
}

ad::Var reconstruct(ad::Var h_hat, ad::Var mask, std::size_t blocks) {
  if (blocks == 0 || mask.rows() != h_hat.rows() || mask.cols() * blocks != mask.rows())
    throw ShapeError("reconstruct: representations " + h_hat.value().shape_string() + " vs mask " +
                     mask.value().shape_string());
  return ad::mul(ad::tanh(ad::block_matmul_nt(h_hat, h_hat, blocks)), mask);
}

ad::Var recon_loss(ad::Var x_hat, ad::Var x_masked, std::size_t blocks) {
  if (!x_hat.value().same_shape(x_masked.value()))
    throw ShapeError("recon_loss: " + x_hat.value().shape_string() + " vs " + x_masked.value().shape_string());
  const double n = static_cast<double>(x_hat.cols());
  return ad::scale(ad::sum(ad::square(ad::sub(x_hat, x_masked))), 1.0 / (n * static_cast<double>(blocks)));
}

}  // namespace brainood::model
