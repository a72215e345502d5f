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
#include <string>
#include <string_view>
#include <vector>

#include "aasvd/matrix.hpp"
#include "aasvd/pipeline.hpp"
#include "aasvd/report.hpp"

namespace aasvd {

// Columns whose norm falls below this count as zero vectors.
inline constexpr double kNearZeroNorm = 1e-12;

// Mean over entries of (y - y')^2.
double mse(const Matrix& y, const Matrix& y_prime);

// Mean over columns of 1 - cos(y_t, y'_t). A column pair that is zero on
// both sides scores 0, zero on one side scores 1.
double cosine_distance(const Matrix& y, const Matrix& y_prime);

// k == 0 means the layer stays dense.
LayerAccount account_layer(Index out_dim, Index in_dim, Index rank);

// Totals over `layers`; `other_params_*` are the non-linear parameters
// (norm scales) added to the model-level counts.
AccountingTotals summarize_accounts(std::vector<LayerAccount> layers,
                                    std::int64_t other_params_before,
                                    std::int64_t other_params_after);

// Dense reference `before` against `after`, layer by layer. Throws
// kDimensionMismatch when the architectures differ.
AccountingTotals accounting(const ToyModel& before, const ToyModel& after);

enum class Site { kOProj, kMlpDown, kBlockOut };
inline constexpr std::array<Site, 3> kAllSites = {Site::kOProj, Site::kMlpDown, Site::kBlockOut};
std::string_view to_string(Site site);

struct DepthErrors {
  int block = 0;  // 1-based
  std::array<double, 3> mse{};     // indexed by Site
  std::array<double, 3> cosine{};  // indexed by Site
};

// Runs both models side by side on `inputs` and compares the O-projection
// output, the down-projection output and the block output at every depth.
std::vector<DepthErrors> error_evolution(const ToyModel& original, const ToyModel& compressed,
                                         const Matrix& inputs);
std::vector<DepthErrors> error_evolution(const ToyModel& original, const ToyModel& compressed,
                                         const CalibrationSet& eval_set);

// Shortest decimal string that reads back to the same double.
std::string format_double(double v);

inline constexpr std::string_view kEvolutionHeader = "run_id,block,site,metric,value";

// One row per (depth, site, metric).
std::string evolution_csv(std::string_view run_id, const std::vector<DepthErrors>& rows);
std::string layers_csv(std::string_view run_id, const std::vector<LayerRecord>& layers);
std::string blocks_csv(std::string_view run_id, const std::vector<BlockRecord>& blocks);
std::string refine_trace_csv(std::string_view run_id, const std::vector<BlockRecord>& blocks);
std::string accounting_json(const AccountingTotals& totals);

struct EvolutionEntry {
  std::string run_id;
  int block = 0;
  Site site = Site::kBlockOut;
  std::string metric;  // "mse" or "cosine"
  double value = 0.0;
};

// Inverse of evolution_csv. Throws kInvalidConfig naming the offending line.
std::vector<EvolutionEntry> parse_evolution_csv(std::string_view text);
// Inverse of accounting_json for the scalar totals (layers are left empty).
// Throws kInvalidConfig.
AccountingTotals parse_accounting_json(std::string_view text);

}  // namespace aasvd
