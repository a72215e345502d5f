/*
 * Copyright (c) 2026 The aasvd Authors. All Rights Reserved
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aasvd/matrix.hpp"
#include "aasvd/toyformer.hpp"

namespace aasvd {

struct RefineConfig {
  double base_lr = 1e-4;
  int epochs = 25;
  int batch_size = 32;  // in sequences
  double warmup_fraction = 0.1;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  // Throws kInvalidConfig.
  void validate() const;
};

struct MseLoss {
  double loss = 0.0;
  Matrix grad;  // d loss / d y_comp
};

// Mean over entries of (y_ref - y_comp)^2 and its gradient
// 2 (y_comp - y_ref) / count.
MseLoss mse_block_loss(const Matrix& y_ref, const Matrix& y_comp);

// Linear warmup from 0 to base_lr over warmup_fraction * total_steps, then
// cosine decay to 0 at total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, const RefineConfig& cfg);

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;
};

// Decoupled-weight-decay Adam. Moments are created lazily on the first call;
// shapes must stay fixed afterwards (kDimensionMismatch otherwise).
void adamw_step(std::span<const std::span<double>> params,
                std::span<const std::span<double>> grads, OptimizerState& state, double lr,
                const RefineConfig& cfg);

struct RefineResult {
  BlockParams refined;
  std::vector<double> loss_trace;  // mean loss seen during each epoch
  double initial_loss = 0.0;       // full-data loss before the first update
  double final_loss = 0.0;         // full-data loss after the last update
};

// Fits the factors and norm scales of `comp`, run on the shifted inputs
// `x_shifted`, to the frozen outputs of `orig` on `x`. Minibatches are whole
// sequences, reshuffled each epoch from `shuffle_seed`. Dense layers of
// `comp` and all of `orig` are left untouched.
RefineResult refine_block(const BlockParams& orig, const BlockParams& comp, const BlockDims& dims,
                          const Matrix& x, const Matrix& x_shifted, const RefineConfig& cfg,
                          std::uint64_t shuffle_seed);

}  // namespace aasvd
