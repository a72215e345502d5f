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

// A LLaMA-style pre-norm transformer block at desk scale:
//
//   h1  = RMSNorm(X; g1)
//   X2  = X + Wo * CausalAttention(Wq h1, Wk h1, Wv h1)
//   h2  = RMSNorm(X2; g2)
//   Y   = X2 + Wdown * (SiLU(Wgate h2) .* (Wup h2))
//
// No biases and no positional encoding. Activations are feature-major
// (d_model x tokens); consecutive groups of seq_len columns form one causal
// sequence. Each of the seven projections is either dense or a rank-k factor
// pair applied as U (V^T x).

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "aasvd/layerwise.hpp"
#include "aasvd/matrix.hpp"

namespace aasvd {

struct BlockDims {
  Index d_model = 0;
  Index n_heads = 0;
  Index d_ff = 0;
  Index seq_len = 0;

  Index d_head() const { return n_heads > 0 ? d_model / n_heads : 0; }
  // Throws kInvalidDims naming the violated constraint.
  void validate() const;
  bool operator==(const BlockDims&) const = default;
};

inline constexpr double kRmsNormEps = 1e-6;

// Forward topological order: Q, K, V feed O; gate and up feed down.
enum class LayerId { kQ, kK, kV, kO, kGate, kUp, kDown };
inline constexpr std::array<LayerId, 7> kAllLayers = {LayerId::kQ,    LayerId::kK,  LayerId::kV,
                                                      LayerId::kO,    LayerId::kGate, LayerId::kUp,
                                                      LayerId::kDown};
inline constexpr size_t layer_index(LayerId id) { return static_cast<size_t>(id); }

std::string_view to_string(LayerId id);
// Throws kUnknownLayer.
LayerId parse_layer(std::string_view name);

// One projection, dense or factorized.
class Linear {
 public:
  Linear() = default;
  explicit Linear(Matrix dense) : repr_(std::move(dense)) {}
  explicit Linear(FactorizedLinear factors) : repr_(std::move(factors)) {}

  bool is_factorized() const { return std::holds_alternative<FactorizedLinear>(repr_); }
  const Matrix& weight() const { return std::get<Matrix>(repr_); }
  Matrix& weight() { return std::get<Matrix>(repr_); }
  const FactorizedLinear& factors() const { return std::get<FactorizedLinear>(repr_); }
  FactorizedLinear& factors() { return std::get<FactorizedLinear>(repr_); }

  Index out_dim() const;
  Index in_dim() const;
  std::int64_t parameter_count() const;
  // Dense equivalent; materializes U V^T for factorized layers.
  Matrix dense() const;
  Matrix apply(const Matrix& x) const;

 private:
  std::variant<Matrix, FactorizedLinear> repr_;
};

struct BlockParams {
  std::array<Linear, 7> linears;
  Vector norm1_scale;
  Vector norm2_scale;

  Linear& at(LayerId id) { return linears[layer_index(id)]; }
  const Linear& at(LayerId id) const { return linears[layer_index(id)]; }

  std::int64_t parameter_count() const;
  bool any_factorized() const;
  bool all_dense() const;
};

// Expected (out, in) shape of a projection.
std::pair<Index, Index> layer_shape(const BlockDims& dims, LayerId id);

// Scaled Gaussian init (std = d_model^{-1/2}), unit norm scales. Same
// (dims, seed) gives bit-identical parameters.
BlockParams init_block(const BlockDims& dims, std::uint64_t seed);

// Checks every tensor against `dims`.
void validate_params(const BlockParams& params, const BlockDims& dims);

// Everything the backward pass needs plus the three sites tracked by the
// error-evolution analysis (o_out, mlp_out, y).
struct ForwardCache {
  BlockDims dims;
  std::array<Index, 7> ranks{};  // 0 for dense layers
  Matrix x;
  Vector inv_rms1;
  Matrix h1;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // [sequence * n_heads + head], seq_len x seq_len
  Matrix attn;                // concatenated head outputs, input of O
  Matrix o_out;
  Matrix x2;
  Vector inv_rms2;
  Matrix h2;
  Matrix gate_pre;
  Matrix up;
  Matrix act;  // SiLU(gate_pre) .* up, input of down
  Matrix mlp_out;
  std::array<Matrix, 7> low_rank_mid;  // V^T x for factorized layers

  Index tokens() const { return x.cols(); }
};

// Input activations seen by projection `id`.
const Matrix& layer_input(const ForwardCache& cache, LayerId id);

struct ForwardResult {
  Matrix y;
  ForwardCache cache;
};

// Throws kDimensionMismatch on shape errors, kNonFiniteActivation if the
// output contains NaN or Inf.
ForwardResult block_forward(const BlockParams& params, const BlockDims& dims, const Matrix& x);

// Gradients mirror BlockParams: dense layers carry dW, factorized layers dU
// and dV; norm scales carry their own gradient.
struct BlockGradients {
  BlockParams params;
  Matrix dx;
};

// Reverse-mode pass for a scalar loss with dL/dY = dy. Throws kCacheMismatch
// if `cache` was not produced by a forward on params with the same
// structure.
BlockGradients block_backward(const BlockParams& params, const ForwardCache& cache,
                              const Matrix& dy);

// Copy of `params` with projection `which` replaced by `factors`.
BlockParams replace_linear(const BlockParams& params, LayerId which, FactorizedLinear factors);
BlockParams replace_linear(const BlockParams& params, std::string_view which,
                           FactorizedLinear factors);

// Tensors updated by block refinement: U and V of every factorized layer,
// then the two norm scales. Order is fixed so parameter and gradient lists
// line up.
std::vector<std::span<double>> trainable_tensors(BlockParams& params);

}  // namespace aasvd
