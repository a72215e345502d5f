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

#include "aasvd/toyformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace aasvd {
namespace {

void rms_norm(const Matrix& x, const Vector& scale, Matrix& out, Vector& inv_rms) {
  const Index d = x.rows();
  inv_rms.resize(x.cols());
  out.resize(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    const double mean_sq = x.col(c).squaredNorm() / static_cast<double>(d);
    inv_rms(c) = 1.0 / std::sqrt(mean_sq + kRmsNormEps);
    out.col(c) = x.col(c).cwiseProduct(scale) * inv_rms(c);
  }
}

// dx for n = g .* x / rms(x), accumulating dg.
Matrix rms_norm_backward(const Matrix& x, const Vector& scale, const Vector& inv_rms,
                         const Matrix& dn, Vector& dscale) {
  const Index d = x.rows();
  Matrix dx(x.rows(), x.cols());
  dscale = Vector::Zero(d);
  for (Index c = 0; c < x.cols(); ++c) {
    const Vector xhat = x.col(c) * inv_rms(c);
    dscale += dn.col(c).cwiseProduct(xhat);
    const Vector u = dn.col(c).cwiseProduct(scale);
    const double proj = u.dot(xhat) / static_cast<double>(d);
    dx.col(c) = inv_rms(c) * (u - xhat * proj);
  }
  return dx;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Forward through a projection, remembering V^T x for factorized layers.
Matrix apply_linear(const Linear& layer, const Matrix& x, Matrix& mid) {
  if (!layer.is_factorized()) {
    mid.resize(0, 0);
    return layer.weight() * x;
  }
  const FactorizedLinear& f = layer.factors();
  mid = f.v.transpose() * x;
  return f.u * mid;
}

// Backward through a projection. Writes the parameter gradient into `grad`
// (same representation as `layer`) and returns dL/dx.
Matrix linear_backward(const Linear& layer, const Matrix& x, const Matrix& mid, const Matrix& dy,
                       Linear& grad) {
  if (!layer.is_factorized()) {
    grad = Linear(Matrix(dy * x.transpose()));
    return layer.weight().transpose() * dy;
  }
  const FactorizedLinear& f = layer.factors();
  FactorizedLinear g;
  g.objective_used = f.objective_used;
  g.u = dy * mid.transpose();
  const Matrix dmid = f.u.transpose() * dy;
  g.v = x * dmid.transpose();
  grad = Linear(std::move(g));
  return f.v * dmid;
}

std::array<Index, 7> rank_signature(const BlockParams& params) {
  std::array<Index, 7> out{};
  for (LayerId id : kAllLayers) {
    const Linear& l = params.at(id);
    out[layer_index(id)] = l.is_factorized() ? l.factors().rank() : 0;
  }
  return out;
}

}  // namespace

void BlockDims::validate() const {
  if (d_model < 1 || n_heads < 1 || d_ff < 1 || seq_len < 1) {
    throw Error(ErrorCode::kInvalidDims, "d_model, n_heads, d_ff and seq_len must all be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw Error(ErrorCode::kInvalidDims, "d_model (" + std::to_string(d_model) +
                                             ") must be divisible by n_heads (" +
                                             std::to_string(n_heads) + ")");
  }
}

std::string_view to_string(LayerId id) {
  switch (id) {
    case LayerId::kQ: return "q_proj";
    case LayerId::kK: return "k_proj";
    case LayerId::kV: return "v_proj";
    case LayerId::kO: return "o_proj";
    case LayerId::kGate: return "gate_proj";
    case LayerId::kUp: return "up_proj";
    case LayerId::kDown: return "down_proj";
  }
  return "unknown";
}

LayerId parse_layer(std::string_view name) {
  for (LayerId id : kAllLayers) {
    if (to_string(id) == name) return id;
  }
  throw Error(ErrorCode::kUnknownLayer, "no projection named '" + std::string(name) + "'");
}

Index Linear::out_dim() const {
  return is_factorized() ? factors().out_dim() : weight().rows();
}

Index Linear::in_dim() const { return is_factorized() ? factors().in_dim() : weight().cols(); }

std::int64_t Linear::parameter_count() const {
  return is_factorized() ? factors().parameter_count()
                         : static_cast<std::int64_t>(weight().rows()) * weight().cols();
}

Matrix Linear::dense() const { return is_factorized() ? factors().dense() : weight(); }

Matrix Linear::apply(const Matrix& x) const {
  Matrix mid;
  return apply_linear(*this, x, mid);
}

std::int64_t BlockParams::parameter_count() const {
  std::int64_t total = norm1_scale.size() + norm2_scale.size();
  for (const Linear& l : linears) total += l.parameter_count();
  return total;
}

bool BlockParams::any_factorized() const {
  return std::any_of(linears.begin(), linears.end(),
                     [](const Linear& l) { return l.is_factorized(); });
}

bool BlockParams::all_dense() const { return !any_factorized(); }

std::pair<Index, Index> layer_shape(const BlockDims& dims, LayerId id) {
  switch (id) {
    case LayerId::kGate:
    case LayerId::kUp:
      return {dims.d_ff, dims.d_model};
    case LayerId::kDown:
      return {dims.d_model, dims.d_ff};
    default:
      return {dims.d_model, dims.d_model};
  }
}

BlockParams init_block(const BlockDims& dims, std::uint64_t seed) {
  dims.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dims.d_model)));
  BlockParams p;
  for (LayerId id : kAllLayers) {
    const auto [rows, cols] = layer_shape(dims, id);
    Matrix w(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) w(i, j) = normal(rng);
    p.at(id) = Linear(std::move(w));
  }
  p.norm1_scale = Vector::Ones(dims.d_model);
  p.norm2_scale = Vector::Ones(dims.d_model);
  return p;
}

void validate_params(const BlockParams& params, const BlockDims& dims) {
  dims.validate();
  for (LayerId id : kAllLayers) {
    const auto [rows, cols] = layer_shape(dims, id);
    const Linear& l = params.at(id);
    bool ok = l.out_dim() == rows && l.in_dim() == cols;
    if (ok && l.is_factorized()) ok = l.factors().u.cols() == l.factors().v.cols();
    if (!ok) {
      throw Error(ErrorCode::kDimensionMismatch,
                  std::string(to_string(id)) + " has shape " + std::to_string(l.out_dim()) + "x" +
                      std::to_string(l.in_dim()) + ", expected " + std::to_string(rows) + "x" +
                      std::to_string(cols));
    }
  }
  if (params.norm1_scale.size() != dims.d_model || params.norm2_scale.size() != dims.d_model) {
    throw Error(ErrorCode::kDimensionMismatch, "norm scale length differs from d_model");
  }
}

const Matrix& layer_input(const ForwardCache& cache, LayerId id) {
  switch (id) {
    case LayerId::kQ:
    case LayerId::kK:
    case LayerId::kV:
      return cache.h1;
    case LayerId::kO:
      return cache.attn;
    case LayerId::kGate:
    case LayerId::kUp:
      return cache.h2;
    case LayerId::kDown:
      return cache.act;
  }
  return cache.x;
}

ForwardResult block_forward(const BlockParams& params, const BlockDims& dims, const Matrix& x) {
  validate_params(params, dims);
  if (x.rows() != dims.d_model || x.cols() % dims.seq_len != 0) {
    throw Error(ErrorCode::kDimensionMismatch,
                "block input " + shape_str(x) + " needs d_model rows and a multiple of seq_len (" +
                    std::to_string(dims.seq_len) + ") columns");
  }
  ForwardResult out;
  ForwardCache& c = out.cache;
  c.dims = dims;
  c.ranks = rank_signature(params);
  c.x = x;
  auto mid = [&](LayerId id) -> Matrix& { return c.low_rank_mid[layer_index(id)]; };

  rms_norm(x, params.norm1_scale, c.h1, c.inv_rms1);
  c.q = apply_linear(params.at(LayerId::kQ), c.h1, mid(LayerId::kQ));
  c.k = apply_linear(params.at(LayerId::kK), c.h1, mid(LayerId::kK));
  c.v = apply_linear(params.at(LayerId::kV), c.h1, mid(LayerId::kV));

  const Index seq = dims.seq_len;
  const Index dh = dims.d_head();
  const Index n_seq = x.cols() / seq;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.attn.resize(dims.d_model, x.cols());
  c.probs.assign(static_cast<size_t>(n_seq * dims.n_heads), Matrix());
  for (Index s = 0; s < n_seq; ++s) {
    for (Index h = 0; h < dims.n_heads; ++h) {
      const auto qh = c.q.block(h * dh, s * seq, dh, seq);
      const auto kh = c.k.block(h * dh, s * seq, dh, seq);
      const auto vh = c.v.block(h * dh, s * seq, dh, seq);
      Matrix p = scale * (qh.transpose() * kh);  // row t: query t against every key
      for (Index t = 0; t < seq; ++t) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j <= t; ++j) row_max = std::max(row_max, p(t, j));
        double denom = 0.0;
        for (Index j = 0; j <= t; ++j) {
          p(t, j) = std::exp(p(t, j) - row_max);
          denom += p(t, j);
        }
        for (Index j = 0; j <= t; ++j) p(t, j) /= denom;
        for (Index j = t + 1; j < seq; ++j) p(t, j) = 0.0;
      }
      c.attn.block(h * dh, s * seq, dh, seq) = vh * p.transpose();
      c.probs[static_cast<size_t>(s * dims.n_heads + h)] = std::move(p);
    }
  }
  c.o_out = apply_linear(params.at(LayerId::kO), c.attn, mid(LayerId::kO));
  c.x2 = x + c.o_out;

  rms_norm(c.x2, params.norm2_scale, c.h2, c.inv_rms2);
  c.gate_pre = apply_linear(params.at(LayerId::kGate), c.h2, mid(LayerId::kGate));
  c.up = apply_linear(params.at(LayerId::kUp), c.h2, mid(LayerId::kUp));
  c.act = c.gate_pre.unaryExpr([](double g) { return g * sigmoid(g); }).cwiseProduct(c.up);
  c.mlp_out = apply_linear(params.at(LayerId::kDown), c.act, mid(LayerId::kDown));
  out.y = c.x2 + c.mlp_out;

  if (!out.y.allFinite()) {
    throw Error(ErrorCode::kNonFiniteActivation, "block output contains NaN or Inf");
  }
  return out;
}

BlockGradients block_backward(const BlockParams& params, const ForwardCache& c,
                              const Matrix& dy) {
  bool same_shape = c.ranks == rank_signature(params);
  try {
    validate_params(params, c.dims);
  } catch (const Error&) {
    same_shape = false;
  }
  if (!same_shape) {
    throw Error(ErrorCode::kCacheMismatch, "cache was produced by a differently shaped block");
  }
  if (dy.rows() != c.x.rows() || dy.cols() != c.x.cols()) {
    throw Error(ErrorCode::kCacheMismatch,
                "dY " + shape_str(dy) + " does not match cached batch " + shape_str(c.x));
  }
  const BlockDims& dims = c.dims;
  BlockGradients g;
  auto mid = [&](LayerId id) -> const Matrix& { return c.low_rank_mid[layer_index(id)]; };
  auto grad = [&](LayerId id) -> Linear& { return g.params.at(id); };

  // Y = X2 + down(act)
  Matrix dx2 = dy;
  const Matrix dact =
      linear_backward(params.at(LayerId::kDown), c.act, mid(LayerId::kDown), dy, grad(LayerId::kDown));
  Matrix dgate(c.gate_pre.rows(), c.gate_pre.cols());
  Matrix dup(c.up.rows(), c.up.cols());
  for (Index i = 0; i < dgate.rows(); ++i) {
    for (Index j = 0; j < dgate.cols(); ++j) {
      const double z = c.gate_pre(i, j);
      const double sg = sigmoid(z);
      const double silu = z * sg;
      const double dsilu = sg * (1.0 + z * (1.0 - sg));
      dgate(i, j) = dact(i, j) * c.up(i, j) * dsilu;
      dup(i, j) = dact(i, j) * silu;
    }
  }
  Matrix dh2 = linear_backward(params.at(LayerId::kGate), c.h2, mid(LayerId::kGate), dgate,
                               grad(LayerId::kGate));
  dh2 += linear_backward(params.at(LayerId::kUp), c.h2, mid(LayerId::kUp), dup, grad(LayerId::kUp));
  dx2 += rms_norm_backward(c.x2, params.norm2_scale, c.inv_rms2, dh2, g.params.norm2_scale);

  // X2 = X + O(attn)
  Matrix dx = dx2;
  const Matrix dattn =
      linear_backward(params.at(LayerId::kO), c.attn, mid(LayerId::kO), dx2, grad(LayerId::kO));

  const Index seq = dims.seq_len;
  const Index dh = dims.d_head();
  const Index n_seq = c.x.cols() / seq;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dq = Matrix::Zero(c.q.rows(), c.q.cols());
  Matrix dk = Matrix::Zero(c.k.rows(), c.k.cols());
  Matrix dv = Matrix::Zero(c.v.rows(), c.v.cols());
  for (Index s = 0; s < n_seq; ++s) {
    for (Index h = 0; h < dims.n_heads; ++h) {
      const Matrix& p = c.probs[static_cast<size_t>(s * dims.n_heads + h)];
      const auto qh = c.q.block(h * dh, s * seq, dh, seq);
      const auto kh = c.k.block(h * dh, s * seq, dh, seq);
      const auto vh = c.v.block(h * dh, s * seq, dh, seq);
      const auto dout = dattn.block(h * dh, s * seq, dh, seq);
      dv.block(h * dh, s * seq, dh, seq) = dout * p;
      const Matrix dp = dout.transpose() * vh;
      Matrix dscores(seq, seq);
      for (Index t = 0; t < seq; ++t) {
        const double row = p.row(t).dot(dp.row(t));
        for (Index j = 0; j < seq; ++j) dscores(t, j) = p(t, j) * (dp(t, j) - row);
      }
      dq.block(h * dh, s * seq, dh, seq) = scale * (kh * dscores.transpose());
      dk.block(h * dh, s * seq, dh, seq) = scale * (qh * dscores);
    }
  }
  Matrix dh1 =
      linear_backward(params.at(LayerId::kQ), c.h1, mid(LayerId::kQ), dq, grad(LayerId::kQ));
  dh1 += linear_backward(params.at(LayerId::kK), c.h1, mid(LayerId::kK), dk, grad(LayerId::kK));
  dh1 += linear_backward(params.at(LayerId::kV), c.h1, mid(LayerId::kV), dv, grad(LayerId::kV));
  dx += rms_norm_backward(c.x, params.norm1_scale, c.inv_rms1, dh1, g.params.norm1_scale);
  g.dx = std::move(dx);
  return g;
}

BlockParams replace_linear(const BlockParams& params, LayerId which, FactorizedLinear factors) {
  const Linear& current = params.at(which);
  if (factors.out_dim() != current.out_dim() || factors.in_dim() != current.in_dim() ||
      factors.u.cols() != factors.v.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(to_string(which)) + " expects " + std::to_string(current.out_dim()) +
                    "x" + std::to_string(current.in_dim()) + ", factors give U " +
                    shape_str(factors.u) + ", V " + shape_str(factors.v));
  }
  BlockParams out = params;
  out.at(which) = Linear(std::move(factors));
  return out;
}

BlockParams replace_linear(const BlockParams& params, std::string_view which,
                           FactorizedLinear factors) {
  return replace_linear(params, parse_layer(which), std::move(factors));
}

std::vector<std::span<double>> trainable_tensors(BlockParams& params) {
  std::vector<std::span<double>> out;
  for (Linear& l : params.linears) {
    if (!l.is_factorized()) continue;
    FactorizedLinear& f = l.factors();
    out.emplace_back(f.u.data(), static_cast<size_t>(f.u.size()));
    out.emplace_back(f.v.data(), static_cast<size_t>(f.v.size()));
  }
  out.emplace_back(params.norm1_scale.data(), static_cast<size_t>(params.norm1_scale.size()));
  out.emplace_back(params.norm2_scale.data(), static_cast<size_t>(params.norm2_scale.size()));
  return out;
}

}  // namespace aasvd
