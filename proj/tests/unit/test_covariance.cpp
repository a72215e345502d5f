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


#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "aasvd/covariance.hpp"
#include "oracles.hpp"

namespace aasvd {
namespace {

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

// Direct products over the full matrices.
struct Direct {
  Matrix c, s, g;
};

Direct direct(const Matrix& a, const Matrix& b) {
  return {a * b.transpose(), b * b.transpose(), a * a.transpose()};
}

std::vector<Index> uneven_cuts(Index total, int pieces, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(1, total - 1);
  std::vector<Index> cuts;
  while (static_cast<int>(cuts.size()) < pieces - 1) {
    const Index c = pick(rng);
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.insert(cuts.begin(), 0);
  cuts.push_back(total);
  return cuts;
}

TEST(Covariance, SingleBasisColumn) {
  CovarianceAccumulator acc(3);
  Matrix e1 = Matrix::Zero(3, 1);
  e1(0, 0) = 1.0;
  acc.accumulate(e1, e1);
  const CovarianceSet cov = acc.finalize();
  const Matrix expected = e1 * e1.transpose();
  EXPECT_EQ(cov.cross, expected);
  EXPECT_EQ(cov.shifted_gram, expected);
  EXPECT_EQ(cov.original_gram, expected);
  EXPECT_EQ(cov.columns, 1);
}

TEST(Covariance, TwoBatchesMatchConcatenation) {
  const Matrix a = oracle::random_matrix(4, 10, 1);
  const Matrix b = oracle::random_matrix(4, 10, 2);
  CovarianceAccumulator split(4), whole(4);
  split.accumulate(a.leftCols(3), b.leftCols(3));
  split.accumulate(a.rightCols(7), b.rightCols(7));
  whole.accumulate(a, b);
  const CovarianceSet x = split.finalize(), y = whole.finalize();
  EXPECT_LE((x.cross - y.cross).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((x.shifted_gram - y.shifted_gram).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((x.original_gram - y.original_gram).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(x.columns, 10);
}

TEST(Covariance, SevenUnevenBatchesMatchSingleShot) {
  const Matrix a = oracle::random_matrix(6, 53, 11);
  const Matrix b = oracle::random_matrix(6, 53, 12);
  const auto cuts = uneven_cuts(53, 7, 5);
  CovarianceAccumulator acc(6);
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    const Index len = cuts[i + 1] - cuts[i];
    acc.accumulate(a.middleCols(cuts[i], len), b.middleCols(cuts[i], len));
  }
  const Direct d = direct(a, b);
  const CovarianceSet cov = acc.finalize();
  EXPECT_LE(rel(cov.cross, d.c), 1e-10);
  EXPECT_LE(rel(cov.shifted_gram, d.s), 1e-10);
  EXPECT_LE(rel(cov.original_gram, d.g), 1e-10);
}

TEST(Covariance, MergeWithEmptyIsIdentity) {
  CovarianceAccumulator acc(3), empty(3);
  acc.accumulate(oracle::random_matrix(3, 5, 3), oracle::random_matrix(3, 5, 4));
  const CovarianceAccumulator m = merged(acc, empty);
  EXPECT_EQ(m.raw_cross(), acc.raw_cross());
  EXPECT_EQ(m.raw_shifted_gram(), acc.raw_shifted_gram());
  EXPECT_EQ(m.raw_original_gram(), acc.raw_original_gram());
  EXPECT_EQ(m.columns_seen(), acc.columns_seen());
}

TEST(Covariance, MergeCommutes) {
  CovarianceAccumulator a(4), b(4);
  a.accumulate(oracle::random_matrix(4, 6, 5), oracle::random_matrix(4, 6, 6));
  b.accumulate(oracle::random_matrix(4, 9, 7), oracle::random_matrix(4, 9, 8));
  const auto ab = merged(a, b), ba = merged(b, a);
  EXPECT_LE((ab.raw_cross() - ba.raw_cross()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((ab.raw_shifted_gram() - ba.raw_shifted_gram()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(ab.columns_seen(), 15);
}

TEST(Covariance, MergeAssociates) {
  std::vector<CovarianceAccumulator> parts;
  for (int i = 0; i < 3; ++i) {
    parts.emplace_back(5);
    parts.back().accumulate(oracle::random_matrix(5, 4 + i, 20 + i),
                            oracle::random_matrix(5, 4 + i, 30 + i));
  }
  const auto left = merged(merged(parts[0], parts[1]), parts[2]);
  const auto right = merged(parts[0], merged(parts[1], parts[2]));
  EXPECT_LE((left.raw_cross() - right.raw_cross()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((left.raw_original_gram() - right.raw_original_gram()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Covariance, TreeMergeMatchesSequential) {
  const Matrix a = oracle::random_matrix(5, 40, 41);
  const Matrix b = oracle::random_matrix(5, 40, 42);
  CovarianceAccumulator seq(5);
  std::vector<CovarianceAccumulator> leaves(4, CovarianceAccumulator(5));
  for (int i = 0; i < 4; ++i) {
    leaves[i].accumulate(a.middleCols(10 * i, 10), b.middleCols(10 * i, 10));
    seq.accumulate(a.middleCols(10 * i, 10), b.middleCols(10 * i, 10));
  }
  const auto tree = merged(merged(leaves[0], leaves[1]), merged(leaves[2], leaves[3]));
  const CovarianceSet x = tree.finalize(), y = seq.finalize();
  EXPECT_LE(rel(x.cross, y.cross), 1e-10);
  EXPECT_LE(rel(x.shifted_gram, y.shifted_gram), 1e-10);
  EXPECT_LE(rel(x.original_gram, y.original_gram), 1e-10);
  EXPECT_EQ(x.columns, 40);
}

TEST(Covariance, IdenticalStreamsGiveEqualSlots) {
  const Matrix a = oracle::random_matrix(4, 12, 9);
  CovarianceAccumulator acc(4);
  acc.accumulate(a, a);
  const CovarianceSet cov = acc.finalize();
  EXPECT_EQ(cov.cross, cov.shifted_gram);
  EXPECT_EQ(cov.shifted_gram, cov.original_gram);
}

TEST(Covariance, FinalizeIsExactlySymmetric) {
  CovarianceAccumulator acc(6);
  for (int i = 0; i < 5; ++i) {
    acc.accumulate(oracle::random_matrix(6, 7, 60 + i), oracle::random_matrix(6, 7, 70 + i));
  }
  const CovarianceSet cov = acc.finalize();
  EXPECT_EQ(cov.shifted_gram, Matrix(cov.shifted_gram.transpose()));
  EXPECT_EQ(cov.original_gram, Matrix(cov.original_gram.transpose()));
}

TEST(Covariance, FinalizeMatchesDirectProducts) {
  const Matrix a = oracle::random_matrix(7, 30, 81);
  const Matrix b = oracle::random_matrix(7, 30, 82);
  CovarianceAccumulator acc(7);
  acc.accumulate(a, b);
  const Direct d = direct(a, b);
  const CovarianceSet cov = acc.finalize();
  EXPECT_LE(rel(cov.cross, d.c), 1e-12);
  EXPECT_LE(rel(cov.shifted_gram, d.s), 1e-12);
  EXPECT_LE(rel(cov.original_gram, d.g), 1e-12);
}

TEST(Covariance, GramsArePositiveSemidefinite) {
  CovarianceAccumulator acc(5);
  acc.accumulate(oracle::random_matrix(5, 3, 1), oracle::random_matrix(5, 3, 2));
  const CovarianceSet cov = acc.finalize();
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov.shifted_gram);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * es.eigenvalues().maxCoeff());
}

TEST(Covariance, BatchOrderInvariance) {
  const Matrix a = oracle::random_matrix(4, 24, 3);
  const Matrix b = oracle::random_matrix(4, 24, 4);
  CovarianceAccumulator fwd(4), rev(4);
  for (int i = 0; i < 6; ++i) fwd.accumulate(a.middleCols(4 * i, 4), b.middleCols(4 * i, 4));
  for (int i = 5; i >= 0; --i) rev.accumulate(a.middleCols(4 * i, 4), b.middleCols(4 * i, 4));
  EXPECT_LE(rel(fwd.finalize().cross, rev.finalize().cross), 1e-12);
}

TEST(Covariance, SlicesForSpecialCases) {
  CovarianceAccumulator acc(3);
  acc.accumulate(oracle::random_matrix(3, 8, 1), oracle::random_matrix(3, 8, 2));
  const CovarianceSet cov = acc.finalize();
  const CovarianceSet orig = cov.original_only();
  const CovarianceSet shifted = cov.shifted_only();
  EXPECT_EQ(orig.cross, cov.original_gram);
  EXPECT_EQ(orig.shifted_gram, cov.original_gram);
  EXPECT_EQ(shifted.cross, cov.shifted_gram);
  EXPECT_EQ(shifted.original_gram, cov.shifted_gram);
}

TEST(Covariance, Errors) {
  CovarianceAccumulator acc(3);
  EXPECT_THROW(
      {
        try {
          (void)acc.finalize();
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::kEmptyAccumulator);
          throw;
        }
      },
      Error);
  EXPECT_THROW(acc.accumulate(Matrix::Zero(2, 4), Matrix::Zero(2, 4)), Error);
  EXPECT_THROW(acc.accumulate(Matrix::Zero(3, 4), Matrix::Zero(3, 5)), Error);
  CovarianceAccumulator other(4);
  EXPECT_THROW(acc.merge(other), Error);
}

}  // namespace
}  // namespace aasvd
