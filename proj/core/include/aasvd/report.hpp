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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aasvd/layerwise.hpp"
#include "aasvd/toyformer.hpp"

namespace aasvd {

// One compressed projection. Depth indices are 1-based.
struct LayerRecord {
  int block = 0;
  LayerId layer = LayerId::kQ;
  Index out_dim = 0;
  Index in_dim = 0;
  Index rank = 0;
  Objective objective = Objective::kAnchored;
  // Value of the layer's own objective at the installed factors, and the
  // closed-form minimum of that objective.
  double objective_value = 0.0;
  double objective_optimum = 0.0;
  // ||W X - W' X'||^2 of each variant's solution on this layer's data,
  // indexed by Objective. NaN where not computed.
  std::array<double, 4> anchored_values{};
  double anchored_optimum = 0.0;
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  bool degenerate = false;
};

struct BlockRecord {
  int block = 0;
  // Block output on the calibration stream: original block on X vs
  // compressed block on X'.
  double mse = 0.0;
  double cosine = 0.0;
  bool refined = false;
  double refine_initial_loss = 0.0;
  double refine_final_loss = 0.0;
  std::vector<double> loss_trace;
};

// Parameter and FLOP bookkeeping for one projection. FLOPs are
// multiply-adds per token; k == 0 marks a dense layer.
struct LayerAccount {
  int block = 0;
  LayerId layer = LayerId::kQ;
  Index out_dim = 0;
  Index in_dim = 0;
  Index rank = 0;
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  std::int64_t flops_before = 0;
  std::int64_t flops_after = 0;

  bool factorized() const { return rank > 0; }
};

struct AccountingTotals {
  std::vector<LayerAccount> layers;
  std::int64_t linear_params_before = 0;
  std::int64_t linear_params_after = 0;
  // Including norm scales.
  std::int64_t total_params_before = 0;
  std::int64_t total_params_after = 0;
  std::int64_t flops_before = 0;
  std::int64_t flops_after = 0;
  // sum k (m + n) / sum m n over factorized layers.
  double effective_ratio = 0.0;
  // sum k / sum min(m, n) over factorized layers; the ratio under remapping.
  double rank_fraction = 0.0;
  double flop_reduction = 0.0;
  std::int64_t factorized_layers = 0;

  // Standard ratio above 1: factors store more than the dense matrix.
  bool remap_regime() const { return effective_ratio > 1.0; }
};

struct CompressionReport {
  std::string run_id;
  std::vector<LayerRecord> layers;
  std::vector<BlockRecord> blocks;
  AccountingTotals totals;
};

}  // namespace aasvd
