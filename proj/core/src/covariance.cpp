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

#include "aasvd/covariance.hpp"

namespace aasvd {

CovarianceSet CovarianceSet::original_only() const {
  return CovarianceSet{original_gram, original_gram, original_gram, columns};
}

CovarianceSet CovarianceSet::shifted_only() const {
  return CovarianceSet{shifted_gram, shifted_gram, shifted_gram, columns};
}

CovarianceAccumulator::CovarianceAccumulator(Index dim)
    : cross_(Matrix::Zero(dim, dim)),
      shifted_gram_(Matrix::Zero(dim, dim)),
      original_gram_(Matrix::Zero(dim, dim)) {}

void CovarianceAccumulator::accumulate(const Matrix& a_batch, const Matrix& b_batch) {
  if (a_batch.rows() != dim() || b_batch.rows() != dim() || a_batch.cols() != b_batch.cols() ||
      a_batch.cols() < 1) {
    throw Error(ErrorCode::kDimensionMismatch,
                "accumulate: expected two " + std::to_string(dim()) +
                    "-row batches of equal width >= 1, got " + shape_str(a_batch) + " and " +
                    shape_str(b_batch));
  }
  cross_.noalias() += a_batch * b_batch.transpose();
  shifted_gram_.noalias() += b_batch * b_batch.transpose();
  original_gram_.noalias() += a_batch * a_batch.transpose();
  columns_ += a_batch.cols();
}

void CovarianceAccumulator::merge(const CovarianceAccumulator& other) {
  if (other.dim() != dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "merge: dims " + std::to_string(dim()) + " vs " +
                                                   std::to_string(other.dim()));
  }
  cross_ += other.cross_;
  shifted_gram_ += other.shifted_gram_;
  original_gram_ += other.original_gram_;
  columns_ += other.columns_;
}

CovarianceSet CovarianceAccumulator::finalize() const {
  if (columns_ < 1) throw Error(ErrorCode::kEmptyAccumulator, "no columns accumulated");
  CovarianceSet out;
  out.cross = cross_;
  out.shifted_gram = 0.5 * (shifted_gram_ + shifted_gram_.transpose());
  out.original_gram = 0.5 * (original_gram_ + original_gram_.transpose());
  out.columns = columns_;
  return out;
}

CovarianceAccumulator merged(CovarianceAccumulator a, const CovarianceAccumulator& b) {
  a.merge(b);
  return a;
}

}  // namespace aasvd
