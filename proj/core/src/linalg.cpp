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

#include "aasvd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

namespace aasvd::linalg {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxSweeps = 100;

void require_square(const Matrix& s, const char* what) {
  if (s.rows() != s.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + " needs a square matrix, got " + shape_str(s));
  }
}

// Sorts eigen/singular pairs by value, descending; stable so ties keep the
// order the sweep produced.
std::vector<Index> descending_order(const Vector& values) {
  std::vector<Index> order(static_cast<size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) > values(b); });
  return order;
}

// Flip column `col` of `q` so its largest-magnitude entry (first on ties) is
// positive, mirroring the flip onto `partner` when given.
void canonicalize_sign(Matrix& q, Index col, Matrix* partner) {
  Index arg = 0;
  for (Index i = 1; i < q.rows(); ++i) {
    if (std::abs(q(i, col)) > std::abs(q(arg, col))) arg = i;
  }
  if (q.rows() > 0 && q(arg, col) < 0) {
    q.col(col) *= -1.0;
    if (partner != nullptr) partner->col(col) *= -1.0;
  }
}

// Orthonormal completion: replaces column `col` of q with a unit vector
// orthogonal to columns [0, col).
void complete_column(Matrix& q, Index col) {
  const Index n = q.rows();
  for (Index e = 0; e < n; ++e) {
    Vector cand = Vector::Zero(n);
    cand(e) = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (Index j = 0; j < col; ++j) {
        cand -= q.col(j).dot(cand) * q.col(j);
      }
    }
    const double norm = cand.norm();
    if (norm > 1e-6) {
      q.col(col) = cand / norm;
      return;
    }
  }
}

struct FullSvd {
  Matrix u;  // m x p
  Vector sigma;
  Matrix v;  // n x p
};

// Gram route for m >= n: eigenvectors of M^T M give V; singular values are
// taken as ||M v_i|| rather than sqrt(lambda_i), which keeps small ones
// accurate instead of burying them under the eigenvalue rounding.
FullSvd gram_svd_tall(const Matrix& m) {
  const Matrix gram = m.transpose() * m;
  const SymmetricEigen eig = symmetric_eigen(0.5 * (gram + gram.transpose()));
  FullSvd out;
  out.v = eig.vectors;
  out.u = m * out.v;
  out.sigma.resize(m.cols());
  for (Index i = 0; i < m.cols(); ++i) out.sigma(i) = out.u.col(i).norm();
  return out;
}

// One-sided Jacobi for m >= n. Columns of the working copy converge to
// U * Sigma while the accumulated rotations form V.
FullSvd jacobi_svd_tall(const Matrix& m) {
  Matrix g = m;
  const Index n = m.cols();
  Matrix v = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Index i = 0; i < n - 1; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        const double alpha = g.col(i).squaredNorm();
        const double beta = g.col(j).squaredNorm();
        const double gamma = g.col(i).dot(g.col(j));
        if (std::abs(gamma) <= kEps * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        const Vector gi = g.col(i);
        g.col(i) = c * gi - s * g.col(j);
        g.col(j) = s * gi + c * g.col(j);
        const Vector vi = v.col(i);
        v.col(i) = c * vi - s * v.col(j);
        v.col(j) = s * vi + c * v.col(j);
      }
    }
    if (!rotated) break;
  }
  FullSvd out;
  out.sigma.resize(n);
  for (Index i = 0; i < n; ++i) out.sigma(i) = g.col(i).norm();
  out.u = std::move(g);
  out.v = std::move(v);
  return out;
}

}  // namespace

Matrix SvdTruncation::reconstruct() const { return u * sigma.asDiagonal() * v.transpose(); }

Matrix symmetrized(const Matrix& s) {
  require_square(s, "symmetrize");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= kSymmetryTol * scale)) {
    std::ostringstream msg;
    msg << "max |S - S^T| = " << asym << " exceeds tolerance " << kSymmetryTol * scale;
    throw Error(ErrorCode::kNotSymmetric, msg.str());
  }
  return 0.5 * (s + s.transpose());
}

SymmetricEigen symmetric_eigen(const Matrix& s) {
  require_square(s, "symmetric_eigen");
  const Index n = s.rows();
  Matrix a = s;
  Matrix v = Matrix::Identity(n, n);
  const double total = a.squaredNorm();
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= kEps * kEps * total * 1e-2 || off == 0.0) break;
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t =
            std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        // A <- J^T A J on rows/cols p, q.
        for (Index r = 0; r < n; ++r) {
          const double arp = a(r, p);
          const double arq = a(r, q);
          a(r, p) = c * arp - sn * arq;
          a(r, q) = sn * arp + c * arq;
        }
        for (Index r = 0; r < n; ++r) {
          const double apr = a(p, r);
          const double aqr = a(q, r);
          a(p, r) = c * apr - sn * aqr;
          a(q, r) = sn * apr + c * aqr;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Index r = 0; r < n; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = c * vrp - sn * vrq;
          v(r, q) = sn * vrp + c * vrq;
        }
      }
    }
  }
  const Vector diag = a.diagonal();
  const auto order = descending_order(diag);
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    out.values(i) = diag(order[static_cast<size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<size_t>(i)]);
    canonicalize_sign(out.vectors, i, nullptr);
  }
  return out;
}

Matrix factor_spd(const Matrix& s_in, FactorMethod method) {
  const Matrix s = symmetrized(s_in);
  const Index n = s.rows();
  if (method == FactorMethod::kCholesky) {
    const double max_diag = n > 0 ? s.diagonal().maxCoeff() : 0.0;
    const double floor = static_cast<double>(n) * kEps * std::max(max_diag, 0.0);
    Matrix r = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
      double d = s(j, j);
      for (Index p = 0; p < j; ++p) d -= r(j, p) * r(j, p);
      if (!(d > floor)) {
        std::ostringstream msg;
        msg << "Cholesky pivot " << j << " = " << d << " (threshold " << floor << ")";
        throw Error(ErrorCode::kNotPositiveDefinite, msg.str());
      }
      const double rjj = std::sqrt(d);
      r(j, j) = rjj;
      for (Index i = j + 1; i < n; ++i) {
        double acc = s(i, j);
        for (Index p = 0; p < j; ++p) acc -= r(i, p) * r(j, p);
        r(i, j) = acc / rjj;
      }
    }
    return r;
  }
  const SymmetricEigen eig = symmetric_eigen(s);
  const double lmax = n > 0 ? std::max(eig.values(0), 0.0) : 0.0;
  const double lmin = n > 0 ? eig.values(n - 1) : 0.0;
  if (!(lmin > static_cast<double>(n) * kEps * lmax)) {
    std::ostringstream msg;
    msg << "smallest eigenvalue " << lmin << " (largest " << lmax << ")";
    throw Error(ErrorCode::kNotPositiveDefinite, msg.str());
  }
  return eig.vectors * eig.values.cwiseSqrt().asDiagonal();
}

Matrix tikhonov_factor(const Matrix& s, double eps, FactorMethod method) {
  if (!(eps > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "Tikhonov eps must be positive");
  }
  Matrix reg = symmetrized(s);
  reg.diagonal().array() += eps;
  return factor_spd(reg, method);
}

SvdTruncation truncated_svd(const Matrix& m, Index k, SvdRoute route) {
  const Index rows = m.rows();
  const Index cols = m.cols();
  const Index p = std::min(rows, cols);
  if (k < 1 || k > p) {
    throw Error(ErrorCode::kRankOutOfRange,
                "rank " + std::to_string(k) + " outside [1, " + std::to_string(p) + "]");
  }
  if (route == SvdRoute::kAuto) route = p <= kGramRouteLimit ? SvdRoute::kGram : SvdRoute::kJacobi;

  // Work on the tall orientation so the Gram matrix is the small one.
  const bool transposed = rows < cols;
  const Matrix tall = transposed ? Matrix(m.transpose()) : m;

  const FullSvd full = route == SvdRoute::kGram ? gram_svd_tall(tall) : jacobi_svd_tall(tall);
  const auto order = descending_order(full.sigma);

  Matrix u_tall(tall.rows(), k);
  Matrix v_tall(tall.cols(), k);
  Vector sigma(k);
  double tail = 0.0;
  for (Index i = 0; i < p; ++i) {
    const Index src = order[static_cast<size_t>(i)];
    if (i < k) {
      sigma(i) = full.sigma(src);
      u_tall.col(i) = full.u.col(src);
      v_tall.col(i) = full.v.col(src);
    } else {
      tail += full.sigma(src) * full.sigma(src);
    }
  }

  SvdTruncation out;
  const double top = sigma(0);
  const double cut = kNoiseFloor * top;
  for (Index i = 0; i < k; ++i) {
    bool kept = false;
    if (sigma(i) > cut && sigma(i) > 0.0) {
      // Columns M v_i / sigma_i are orthogonal only up to eps * sigma_1 /
      // sigma_i; a second Gram-Schmidt pass restores orthonormality.
      Vector col = u_tall.col(i) / sigma(i);
      for (int pass = 0; pass < 2; ++pass) {
        for (Index j = 0; j < i; ++j) col -= u_tall.col(j).dot(col) * u_tall.col(j);
      }
      const double norm = col.norm();
      if (norm > 0.5) {
        u_tall.col(i) = col / norm;
        kept = true;
        ++out.numerical_rank;
      }
    }
    if (!kept) complete_column(u_tall, i);
    canonicalize_sign(v_tall, i, &u_tall);
  }
  if (k < p) {
    const double next = full.sigma(order[static_cast<size_t>(k)]);
    out.degenerate = std::abs(sigma(k - 1) - next) <= kNoiseFloor * std::max(top, 1e-300);
  }
  out.sigma = std::move(sigma);
  out.tail_energy = tail;
  if (transposed) {
    out.u = std::move(v_tall);
    out.v = std::move(u_tall);
  } else {
    out.u = std::move(u_tall);
    out.v = std::move(v_tall);
  }
  return out;
}

bool is_lower_triangular(const Matrix& r) {
  for (Index i = 0; i < r.rows(); ++i)
    for (Index j = i + 1; j < r.cols(); ++j)
      if (r(i, j) != 0.0) return false;
  return true;
}

bool is_upper_triangular(const Matrix& r) {
  for (Index i = 0; i < r.rows(); ++i)
    for (Index j = 0; j < std::min(i, r.cols()); ++j)
      if (r(i, j) != 0.0) return false;
  return true;
}

double condition_estimate(const Matrix& r, const Matrix& r_inv) {
  const double n1 = r.cwiseAbs().colwise().sum().maxCoeff();
  const double n2 = r_inv.cwiseAbs().colwise().sum().maxCoeff();
  return n1 * n2;
}

Matrix invert_factor(const Matrix& r) {
  require_square(r, "invert_factor");
  const Index n = r.rows();
  Matrix inv = Matrix::Zero(n, n);
  auto singular = [](const std::string& why) {
    throw Error(ErrorCode::kSingularFactor, why);
  };

  if (is_lower_triangular(r)) {
    for (Index j = 0; j < n; ++j) {
      if (r(j, j) == 0.0) singular("zero diagonal at " + std::to_string(j));
    }
    // Column c of the inverse solves R x = e_c by forward substitution.
    for (Index c = 0; c < n; ++c) {
      for (Index i = c; i < n; ++i) {
        double acc = i == c ? 1.0 : 0.0;
        for (Index p = c; p < i; ++p) acc -= r(i, p) * inv(p, c);
        inv(i, c) = acc / r(i, i);
      }
    }
  } else if (is_upper_triangular(r)) {
    for (Index j = 0; j < n; ++j) {
      if (r(j, j) == 0.0) singular("zero diagonal at " + std::to_string(j));
    }
    for (Index c = 0; c < n; ++c) {
      for (Index i = c; i >= 0; --i) {
        double acc = i == c ? 1.0 : 0.0;
        for (Index p = i + 1; p <= c; ++p) acc -= r(i, p) * inv(p, c);
        inv(i, c) = acc / r(i, i);
      }
    }
  } else {
    Matrix lu = r;
    std::vector<Index> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index col = 0; col < n; ++col) {
      Index piv = col;
      for (Index i = col + 1; i < n; ++i)
        if (std::abs(lu(i, col)) > std::abs(lu(piv, col))) piv = i;
      if (lu(piv, col) == 0.0) singular("zero pivot at column " + std::to_string(col));
      if (piv != col) {
        lu.row(piv).swap(lu.row(col));
        std::swap(perm[static_cast<size_t>(piv)], perm[static_cast<size_t>(col)]);
      }
      for (Index i = col + 1; i < n; ++i) {
        lu(i, col) /= lu(col, col);
        const double f = lu(i, col);
        for (Index j = col + 1; j < n; ++j) lu(i, j) -= f * lu(col, j);
      }
    }
    for (Index c = 0; c < n; ++c) {
      Vector x(n);
      for (Index i = 0; i < n; ++i) {
        double acc = perm[static_cast<size_t>(i)] == c ? 1.0 : 0.0;
        for (Index p = 0; p < i; ++p) acc -= lu(i, p) * x(p);
        x(i) = acc;
      }
      for (Index i = n - 1; i >= 0; --i) {
        double acc = x(i);
        for (Index p = i + 1; p < n; ++p) acc -= lu(i, p) * x(p);
        x(i) = acc / lu(i, i);
      }
      inv.col(c) = x;
    }
  }

  const double cond = condition_estimate(r, inv);
  if (!(cond <= kMaxFactorCondition)) {
    std::ostringstream msg;
    msg << "condition estimate " << cond << " exceeds " << kMaxFactorCondition;
    singular(msg.str());
  }
  return inv;
}

}  // namespace aasvd::linalg
