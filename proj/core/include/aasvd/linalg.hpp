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

// Dense kernels used by every layer solver: SPD factorization, symmetric
// eigendecomposition, truncated SVD and factor inversion. All functions are
// pure; results depend only on their arguments.

#include "aasvd/matrix.hpp"

namespace aasvd::linalg {

enum class FactorMethod { kCholesky, kEvd };

enum class SvdRoute {
  kAuto,    // Gram route when min(m, n) <= kGramRouteLimit, Jacobi otherwise
  kGram,    // eigendecomposition of the smaller Gram matrix
  kJacobi,  // one-sided (Hestenes) Jacobi on the matrix itself
};

inline constexpr Index kGramRouteLimit = 64;

// Singular values below this fraction of sigma_1 count as zero.
inline constexpr double kNoiseFloor = 1e-12;

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kMaxFactorCondition = 1e12;

// Top-k singular triplets of an m x n matrix.
struct SvdTruncation {
  Matrix u;            // m x k, orthonormal columns
  Vector sigma;        // k values, non-increasing, >= 0
  Matrix v;            // n x k, orthonormal columns
  double tail_energy;  // sum of sigma_i^2 for i > k
  Index numerical_rank = 0;  // how many of the k values exceed the noise floor
  // sigma_k and sigma_{k+1} coincide within the noise floor, so the
  // truncation is not unique.
  bool degenerate = false;

  Matrix reconstruct() const;
};

// Eigenpairs of a symmetric matrix, eigenvalues non-increasing.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;  // column i pairs with values(i)
};

// (S + S^T) / 2 after checking S is square and symmetric within
// kSymmetryTol * max(1, max|S|).
Matrix symmetrized(const Matrix& s);

// Cyclic Jacobi eigensolver; input must be symmetric.
SymmetricEigen symmetric_eigen(const Matrix& s);

// R with S = R R^T. Cholesky returns the lower-triangular factor, EVD returns
// Q Lambda^{1/2}. Throws kNotSymmetric / kNotPositiveDefinite; never
// regularizes silently.
Matrix factor_spd(const Matrix& s, FactorMethod method = FactorMethod::kCholesky);

// Exact factor of S + eps I for a PSD (possibly singular) S.
Matrix tikhonov_factor(const Matrix& s, double eps,
                       FactorMethod method = FactorMethod::kCholesky);

SvdTruncation truncated_svd(const Matrix& m, Index k, SvdRoute route = SvdRoute::kAuto);

// Inverse of an invertible factor. Triangular inputs use substitution,
// anything else LU with partial pivoting. Throws kSingularFactor when a
// pivot vanishes or the 1-norm condition estimate exceeds kMaxFactorCondition.
Matrix invert_factor(const Matrix& r);

// ||R||_1 * ||R^{-1}||_1 given both.
double condition_estimate(const Matrix& r, const Matrix& r_inv);

bool is_lower_triangular(const Matrix& r);
bool is_upper_triangular(const Matrix& r);

}  // namespace aasvd::linalg
