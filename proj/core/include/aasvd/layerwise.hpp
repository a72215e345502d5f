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

// Closed-form rank-k layer compression.
//
// For a weight W (m x n), original inputs A and shifted inputs B (n x l), the
// anchored problem
//
//     min_{rank(W') <= k} || W A - W' B ||_F^2
//
// is solved from the statistics C = A B^T and S = B B^T alone: factor
// S = R R^T, form M = W C R^{-T}, truncate M to its top-k singular triplets
// (U_k, sigma_k, V_k) and map back with U = U_k diag(sigma_k), V = R^{-T} V_k.
// The minimum is tr(W G W^T) - ||M||_F^2 + sum_{i>k} sigma_i(M)^2 with
// G = A A^T. The other three objectives are the special cases A = B = X
// (input-aware), A = B = X' (shift-aware) and plain weight truncation
// (input-agnostic).

#include <array>
#include <optional>
#include <string_view>

#include "aasvd/covariance.hpp"
#include "aasvd/linalg.hpp"
#include "aasvd/matrix.hpp"

namespace aasvd {

enum class Objective { kInputAgnostic, kInputAware, kShiftAware, kAnchored };

inline constexpr std::array<Objective, 4> kAllObjectives = {
    Objective::kInputAgnostic, Objective::kInputAware, Objective::kShiftAware,
    Objective::kAnchored};

std::string_view to_string(Objective objective);
// Accepts the snake_case names produced by to_string(); throws kInvalidConfig.
Objective parse_objective(std::string_view name);

// W' = U V^T with U (m x k) and V (n x k).
struct FactorizedLinear {
  Matrix u;
  Matrix v;
  Objective objective_used = Objective::kAnchored;
  bool degenerate = false;  // sigma_k tied with sigma_{k+1}

  Index rank() const { return u.cols(); }
  Index out_dim() const { return u.rows(); }
  Index in_dim() const { return v.rows(); }
  std::int64_t parameter_count() const {
    return static_cast<std::int64_t>(rank()) * (out_dim() + in_dim());
  }
  Matrix dense() const { return u * v.transpose(); }
};

struct RatioPolicy {
  double target_ratio = 1.0;  // in (0, 1]
  bool remap = false;
};

// floor(rho m n / (m + n)) normally, floor(rho min(m, n)) under remapping;
// clamped to [1, min(m, n)].
Index rank_from_ratio(Index m, Index n, const RatioPolicy& policy);

enum class SingularPolicy {
  kFail,      // throw kSingularCovariance
  kTikhonov,  // retry with S + eps I, eps = kTikhonovScale * tr(S) / n
};

inline constexpr double kTikhonovScale = 1e-6;

struct SolveOptions {
  linalg::FactorMethod method = linalg::FactorMethod::kCholesky;
  SingularPolicy singular = SingularPolicy::kFail;
};

// Anchored closed form on the statistics of (A, B).
FactorizedLinear compress_layer(const Matrix& w, const CovarianceSet& cov, Index k,
                                const SolveOptions& options = {});

// Solves `objective` given the anchored statistics of (X, X'); the other
// variants read the slots they need.
FactorizedLinear compress_with_objective(const Matrix& w, const CovarianceSet& anchored_cov,
                                         Index k, Objective objective,
                                         const SolveOptions& options = {});

// Accumulates the statistics of (X, X') and dispatches on `objective`.
FactorizedLinear compress_layer_variant(const Matrix& w, const Matrix& x, const Matrix& x_shifted,
                                        Index k, Objective objective,
                                        const SolveOptions& options = {});

// Statistics slice consumed by `objective` (input-agnostic has none and
// returns the anchored set unchanged).
CovarianceSet covariance_for(const CovarianceSet& anchored_cov, Objective objective);

// ||W A - U V^T B||_F^2 from raw activations.
double objective_error(const Matrix& w, const FactorizedLinear& f, const Matrix& a,
                       const Matrix& b);

// Same value through the trace expansion
// tr(W G W^T) - 2 tr(W C W'^T) + tr(W' S W'^T).
double objective_error(const Matrix& w, const FactorizedLinear& f, const CovarianceSet& cov);

// Minimum of the anchored problem for `cov`.
double closed_form_optimum(const Matrix& w, const CovarianceSet& cov, Index k,
                           const SolveOptions& options = {});

}  // namespace aasvd
