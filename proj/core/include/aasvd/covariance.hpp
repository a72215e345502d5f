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

#include "aasvd/matrix.hpp"

namespace aasvd {

// Sufficient statistics of a layer's calibration pair (A, B):
// cross = A B^T, shifted_gram = B B^T, original_gram = A A^T.
// Activations are not mean-centered.
struct CovarianceSet {
  Matrix cross;
  Matrix shifted_gram;
  Matrix original_gram;
  std::int64_t columns = 0;

  Index dim() const { return cross.rows(); }

  // Statistics of (A, A): every slot is A A^T.
  CovarianceSet original_only() const;
  // Statistics of (B, B): every slot is B B^T.
  CovarianceSet shifted_only() const;
};

// Streaming accumulator over column batches of (A, B). Single writer; use one
// per worker and merge().
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(Index dim);

  Index dim() const { return cross_.rows(); }
  std::int64_t columns_seen() const { return columns_; }

  // Adds A_batch B_batch^T, B_batch B_batch^T, A_batch A_batch^T.
  void accumulate(const Matrix& a_batch, const Matrix& b_batch);

  // Elementwise sum with `other`.
  void merge(const CovarianceAccumulator& other);

  // Symmetrized snapshot; throws kEmptyAccumulator before any column.
  CovarianceSet finalize() const;

  const Matrix& raw_cross() const { return cross_; }
  const Matrix& raw_shifted_gram() const { return shifted_gram_; }
  const Matrix& raw_original_gram() const { return original_gram_; }

 private:
  Matrix cross_;
  Matrix shifted_gram_;
  Matrix original_gram_;
  std::int64_t columns_ = 0;
};

CovarianceAccumulator merged(CovarianceAccumulator a, const CovarianceAccumulator& b);

}  // namespace aasvd
