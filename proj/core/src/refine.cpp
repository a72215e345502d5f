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

#include "aasvd/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace aasvd {
namespace {

Matrix gather_sequences(const Matrix& src, std::span<const Index> seqs, Index seq_len) {
  Matrix out(src.rows(), static_cast<Index>(seqs.size()) * seq_len);
  for (size_t i = 0; i < seqs.size(); ++i) {
    out.middleCols(static_cast<Index>(i) * seq_len, seq_len) =
        src.middleCols(seqs[i] * seq_len, seq_len);
  }
  return out;
}

double full_loss(const BlockParams& params, const BlockDims& dims, const Matrix& x,
                 const Matrix& y_ref) {
  return mse_block_loss(y_ref, block_forward(params, dims, x).y).loss;
}

}  // namespace

void RefineConfig::validate() const {
  if (!(base_lr >= 0.0) || epochs < 1 || batch_size < 1 || !(warmup_fraction >= 0.0) ||
      !(warmup_fraction < 1.0) || !(weight_decay >= 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) ||
      !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig,
                "refine config needs lr >= 0, epochs >= 1, batch_size >= 1, "
                "0 <= warmup_fraction < 1, betas in [0, 1), adam_eps > 0");
  }
}

MseLoss mse_block_loss(const Matrix& y_ref, const Matrix& y_comp) {
  require_same_shape(y_ref, y_comp, "mse_block_loss");
  const double count = static_cast<double>(y_ref.size());
  MseLoss out;
  const Matrix diff = y_comp - y_ref;
  out.loss = diff.squaredNorm() / count;
  out.grad = (2.0 / count) * diff;
  return out;
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, const RefineConfig& cfg) {
  const double total = static_cast<double>(std::max<std::int64_t>(total_steps, 1));
  const double s = std::clamp(static_cast<double>(step), 0.0, total);
  const double warmup = cfg.warmup_fraction * total;
  if (s < warmup) return cfg.base_lr * s / warmup;
  const double progress = (s - warmup) / (total - warmup);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(std::span<const std::span<double>> params,
                std::span<const std::span<double>> grads, OptimizerState& state, double lr,
                const RefineConfig& cfg) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "adamw_step: parameter and gradient lists differ");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "adamw_step: optimizer state has wrong arity");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || state.first_moment[i].size() != params[i].size()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "adamw_step: tensor " + std::to_string(i) + " changed shape");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto p = params[i];
    const auto g = grads[i];
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      p[j] = p[j] * decay - lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

RefineResult refine_block(const BlockParams& orig, const BlockParams& comp, const BlockDims& dims,
                          const Matrix& x, const Matrix& x_shifted, const RefineConfig& cfg,
                          std::uint64_t shuffle_seed) {
  cfg.validate();
  if (!orig.all_dense()) {
    throw Error(ErrorCode::kInvalidConfig, "reference block must be fully dense");
  }
  if (!comp.any_factorized()) {
    throw Error(ErrorCode::kNoFactorizedLayers, "compressed block has no factorized projection");
  }
  require_same_shape(x, x_shifted, "refine_block inputs");

  const Matrix y_ref = block_forward(orig, dims, x).y;
  RefineResult result;
  result.refined = comp;
  result.initial_loss = full_loss(result.refined, dims, x_shifted, y_ref);
  if (!std::isfinite(result.initial_loss)) {
    throw Error(ErrorCode::kNonFiniteLoss, "initial loss is not finite");
  }

  const Index seq = dims.seq_len;
  const Index n_seq = x.cols() / seq;
  const Index batch = std::min<Index>(cfg.batch_size, n_seq);
  const std::int64_t steps_per_epoch = (n_seq + batch - 1) / batch;
  const std::int64_t total_steps = steps_per_epoch * cfg.epochs;

  std::vector<Index> order(static_cast<size_t>(n_seq));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(shuffle_seed);
  OptimizerState state;
  std::int64_t step = 0;
  const auto params = trainable_tensors(result.refined);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (Index start = 0; start < n_seq; start += batch) {
      const Index len = std::min(batch, n_seq - start);
      const std::span<const Index> seqs(order.data() + start, static_cast<size_t>(len));
      const Matrix xb = gather_sequences(x_shifted, seqs, seq);
      const Matrix yb = gather_sequences(y_ref, seqs, seq);

      ForwardResult fwd;
      try {
        fwd = block_forward(result.refined, dims, xb);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFiniteActivation) throw;
        throw Error(ErrorCode::kNonFiniteLoss,
                    "activations diverged in epoch " + std::to_string(epoch + 1));
      }
      const MseLoss loss = mse_block_loss(yb, fwd.y);
      if (!std::isfinite(loss.loss)) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    "loss diverged in epoch " + std::to_string(epoch + 1));
      }
      weighted += loss.loss * static_cast<double>(yb.size());
      BlockGradients grads = block_backward(result.refined, fwd.cache, loss.grad);
      const auto grad_spans = trainable_tensors(grads.params);
      // Evaluate the schedule one step ahead on a stretched horizon so neither
      // the first nor the last update lands on a zero learning rate.
      ++step;
      adamw_step(params, grad_spans, state, lr_schedule(step, total_steps + 1, cfg), cfg);
    }
    const double epoch_loss = weighted / static_cast<double>(y_ref.size());
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::kNonFiniteLoss, "loss diverged in epoch " + std::to_string(epoch + 1));
    }
    result.loss_trace.push_back(epoch_loss);
  }
  try {
    result.final_loss = full_loss(result.refined, dims, x_shifted, y_ref);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonFiniteActivation) throw;
    result.final_loss = std::numeric_limits<double>::infinity();
  }
  if (!std::isfinite(result.final_loss)) {
    throw Error(ErrorCode::kNonFiniteLoss, "final loss is not finite");
  }
  return result;
}

}  // namespace aasvd
