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

#include "aasvd/layerwise.hpp"

#include <algorithm>
#include <cmath>

namespace aasvd {
namespace {

using linalg::FactorMethod;

void require_weight_matches(const Matrix& w, const CovarianceSet& cov) {
  if (cov.cross.rows() != w.cols() || cov.cross.cols() != w.cols() ||
      cov.shifted_gram.rows() != w.cols() || cov.original_gram.rows() != w.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "weight " + shape_str(w) + " vs covariance dim " + std::to_string(cov.dim()));
  }
}

// R^{-T} for S = R R^T, honoring the singular policy.
Matrix whitening_inverse_transpose(const Matrix& s, const SolveOptions& options) {
  Matrix r;
  try {
    r = linalg::factor_spd(s, options.method);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotPositiveDefinite) throw;
    if (options.singular == SingularPolicy::kFail) {
      throw Error(ErrorCode::kSingularCovariance, e.what());
    }
    const double n = static_cast<double>(s.rows());
    double eps = kTikhonovScale * s.trace() / n;
    if (!(eps > 0.0)) eps = kTikhonovScale;
    r = linalg::tikhonov_factor(s, eps, options.method);
  }
  try {
    return linalg::invert_factor(r).transpose();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSingularFactor) throw;
    throw Error(ErrorCode::kSingularCovariance, e.what());
  }
}

struct WhitenedTarget {
  Matrix m;              // W C R^{-T}
  Matrix r_inv_t;        // R^{-T}
};

WhitenedTarget whitened_target(const Matrix& w, const CovarianceSet& cov,
                               const SolveOptions& options) {
  require_weight_matches(w, cov);
  WhitenedTarget out;
  out.r_inv_t = whitening_inverse_transpose(cov.shifted_gram, options);
  out.m = w * cov.cross * out.r_inv_t;
  return out;
}

void require_rank(Index k, Index m, Index n) {
  if (k < 1 || k > std::min(m, n)) {
    throw Error(ErrorCode::kRankOutOfRange, "rank " + std::to_string(k) + " for " +
                                                std::to_string(m) + "x" + std::to_string(n));
  }
}

}  // namespace

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::kInputAgnostic:
      return "input_agnostic";
    case Objective::kInputAware:
      return "input_aware";
    case Objective::kShiftAware:
      return "shift_aware";
    case Objective::kAnchored:
      return "anchored";
  }
  return "unknown";
}

Objective parse_objective(std::string_view name) {
  for (Objective o : kAllObjectives) {
    if (to_string(o) == name) return o;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown objective '" + std::string(name) + "'");
}

Index rank_from_ratio(Index m, Index n, const RatioPolicy& policy) {
  const Index cap = std::min(m, n);
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);
  const double raw = policy.remap ? policy.target_ratio * static_cast<double>(cap)
                                  : policy.target_ratio * md * nd / (md + nd);
  // Tolerate representation error in rho (0.7 * 10 is 7.000000000000001,
  // 0.29 * 100 is 28.999999999999996).
  const double k = std::floor(raw * (1.0 + 1e-12));
  return std::clamp(static_cast<Index>(k), Index{1}, cap);
}

FactorizedLinear compress_layer(const Matrix& w, const CovarianceSet& cov, Index k,
                                const SolveOptions& options) {
  require_rank(k, w.rows(), w.cols());
  const WhitenedTarget target = whitened_target(w, cov, options);
  const linalg::SvdTruncation svd = linalg::truncated_svd(target.m, k);
  FactorizedLinear f;
  // M V_k equals U_k diag(sigma_k) and keeps the product exact when trailing
  // singular values sit at the noise floor.
  f.u = target.m * svd.v;
  f.v = target.r_inv_t * svd.v;
  f.objective_used = Objective::kAnchored;
  f.degenerate = svd.degenerate;
  return f;
}

CovarianceSet covariance_for(const CovarianceSet& anchored_cov, Objective objective) {
  switch (objective) {
    case Objective::kInputAware:
      return anchored_cov.original_only();
    case Objective::kShiftAware:
      return anchored_cov.shifted_only();
    case Objective::kAnchored:
    case Objective::kInputAgnostic:
      return anchored_cov;
  }
  return anchored_cov;
}

FactorizedLinear compress_with_objective(const Matrix& w, const CovarianceSet& anchored_cov,
                                         Index k, Objective objective,
                                         const SolveOptions& options) {
  if (objective == Objective::kInputAgnostic) {
    require_rank(k, w.rows(), w.cols());
    const linalg::SvdTruncation svd = linalg::truncated_svd(w, k);
    FactorizedLinear f;
    f.u = w * svd.v;
    f.v = svd.v;
    f.objective_used = objective;
    f.degenerate = svd.degenerate;
    return f;
  }
  FactorizedLinear f = compress_layer(w, covariance_for(anchored_cov, objective), k, options);
  f.objective_used = objective;
  return f;
}

FactorizedLinear compress_layer_variant(const Matrix& w, const Matrix& x, const Matrix& x_shifted,
                                        Index k, Objective objective,
                                        const SolveOptions& options) {
  CovarianceAccumulator acc(w.cols());
  acc.accumulate(x, x_shifted);
  return compress_with_objective(w, acc.finalize(), k, objective, options);
}

double objective_error(const Matrix& w, const FactorizedLinear& f, const Matrix& a,
                       const Matrix& b) {
  if (a.rows() != w.cols() || b.rows() != w.cols() || a.cols() != b.cols() ||
      f.out_dim() != w.rows() || f.in_dim() != w.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "objective_error: W " + shape_str(w) + ", A " +
                                                   shape_str(a) + ", B " + shape_str(b));
  }
  const Matrix residual = w * a - f.u * (f.v.transpose() * b);
  return residual.squaredNorm();
}

double objective_error(const Matrix& w, const FactorizedLinear& f, const CovarianceSet& cov) {
  require_weight_matches(w, cov);
  if (f.out_dim() != w.rows() || f.in_dim() != w.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "objective_error: factors do not match W");
  }
  const double anchor = (w * cov.original_gram).cwiseProduct(w).sum();
  const double cross = (f.u.transpose() * w * cov.cross * f.v).trace();
  const Matrix utu = f.u.transpose() * f.u;
  const Matrix vsv = f.v.transpose() * cov.shifted_gram * f.v;
  const double fitted = utu.cwiseProduct(vsv).sum();
  return anchor - 2.0 * cross + fitted;
}

double closed_form_optimum(const Matrix& w, const CovarianceSet& cov, Index k,
                           const SolveOptions& options) {
  require_rank(k, w.rows(), w.cols());
  const WhitenedTarget target = whitened_target(w, cov, options);
  const linalg::SvdTruncation svd = linalg::truncated_svd(target.m, k);
  const double anchor = (w * cov.original_gram).cwiseProduct(w).sum();
  return anchor - target.m.squaredNorm() + svd.tail_energy;
}

}  // namespace aasvd
