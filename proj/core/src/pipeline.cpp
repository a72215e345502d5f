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


#include "aasvd/pipeline.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "aasvd/metrics.hpp"
#include "aasvd/parallel.hpp"
#include "aasvd/rng.hpp"

namespace aasvd {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Q/K/V read h1, O reads the attention output, gate/up read h2, down reads
// the gated activation.
std::size_t input_group(LayerId id) {
  switch (id) {
    case LayerId::kQ:
    case LayerId::kK:
    case LayerId::kV:
      return 0;
    case LayerId::kO:
      return 1;
    case LayerId::kGate:
    case LayerId::kUp:
      return 2;
    case LayerId::kDown:
      return 3;
  }
  return 0;
}

std::string layer_label(int depth, LayerId id) {
  return "block " + std::to_string(depth) + " " + std::string(to_string(id));
}

struct Score {
  double value = kNaN;
  double optimum = kNaN;
};

// The layer's own objective at `f` and the closed-form minimum of it.
Score own_score(const Matrix& w, const FactorizedLinear& f, const CovarianceSet& cov,
                Objective objective, Index k, const SolveOptions& options) {
  if (objective == Objective::kInputAgnostic) {
    return {(w - f.dense()).squaredNorm(), linalg::truncated_svd(w, k).tail_energy};
  }
  const CovarianceSet c = covariance_for(cov, objective);
  return {objective_error(w, f, c), closed_form_optimum(w, c, k, options)};
}

Matrix row_vector(const Vector& v) { return Matrix(v.transpose()); }

Vector to_vector(const Matrix& m, Index expected, const std::string& name) {
  if (m.rows() != 1 || m.cols() != expected) {
    throw Error(ErrorCode::kDimensionMismatch,
                name + " is " + shape_str(m) + ", expected 1x" + std::to_string(expected));
  }
  return m.row(0).transpose();
}

std::string block_prefix(std::size_t i) { return "block" + std::to_string(i) + "."; }

double exact_index(double v, const char* what) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 4294967295.0) {
    throw Error(ErrorCode::kCorruptContainer, std::string("meta field ") + what + " is not a count");
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------- model

std::int64_t ToyModel::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& b : blocks) total += b.parameter_count();
  return total;
}

void ToyModel::validate() const {
  dims.validate();
  if (blocks.empty()) throw Error(ErrorCode::kInvalidDims, "n_blocks must be >= 1");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    try {
      validate_params(blocks[i], dims);
    } catch (const Error& e) {
      throw e.with_context("block " + std::to_string(i + 1));
    }
  }
}

ToyModel make_model(const BlockDims& dims, Index n_blocks, std::uint64_t seed) {
  dims.validate();
  if (n_blocks < 1) throw Error(ErrorCode::kInvalidDims, "n_blocks must be >= 1");
  ToyModel m;
  m.dims = dims;
  m.embed_seed = seed;
  for (Index i = 0; i < n_blocks; ++i) {
    m.blocks.push_back(
        init_block(dims, split_seed(seed, seed_stream::kModel, static_cast<std::uint64_t>(i))));
  }
  return m;
}

Matrix model_forward(const ToyModel& model, const Matrix& x) {
  Matrix h = x;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    try {
      h = block_forward(model.blocks[i], model.dims, h).y;
    } catch (const Error& e) {
      throw e.with_context("block " + std::to_string(i + 1));
    }
  }
  return h;
}

CalibrationSet generate_calibration(const BlockDims& dims, Index n_sequences, std::uint64_t seed) {
  dims.validate();
  if (n_sequences < 1) throw Error(ErrorCode::kInvalidConfig, "need at least one sequence");
  const Index d = dims.d_model;
  const Index seq = dims.seq_len;
  Vector scale(d);
  for (Index i = 0; i < d; ++i) {
    const double t = d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
    scale(i) = std::pow(kCalibrationScaleFloor, t);
  }

  CalibrationSet out;
  out.sequences = n_sequences;
  out.seq_len = seq;
  out.seed = seed;
  out.inputs.resize(d, n_sequences * seq);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index s = 0; s < n_sequences; ++s) {
    auto block = out.inputs.middleCols(s * seq, seq);
    for (Index t = 0; t < seq; ++t)
      for (Index i = 0; i < d; ++i) block(i, t) = scale(i) * normal(rng);
    const double rms = std::sqrt(block.squaredNorm() / static_cast<double>(d * seq));
    block /= rms;
  }
  return out;
}

// ---------------------------------------------------------------- config

std::string_view to_string(ShiftSource source) {
  return source == ShiftSource::kInPlace ? "in_place" : "block_entry";
}

ShiftSource parse_shift_source(std::string_view name) {
  if (name == "in_place") return ShiftSource::kInPlace;
  if (name == "block_entry") return ShiftSource::kBlockEntry;
  throw Error(ErrorCode::kInvalidConfig,
              "shift_source must be in_place or block_entry, got '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (!(ratio.target_ratio > 0.0 && ratio.target_ratio <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "ratio must lie in (0, 1]");
  }
  if (refine_enabled) refine.validate();
}

// ---------------------------------------------------------------- block

BlockCompressor::BlockCompressor(const BlockParams& original, const BlockDims& dims, Matrix x,
                                 Matrix x_shifted, const RunConfig& cfg, int depth)
    : original_params_(original),
      dims_(dims),
      x_(std::move(x)),
      x_shifted_(std::move(x_shifted)),
      cfg_(cfg),
      depth_(depth),
      working_(original) {
  if (!original_params_.all_dense()) {
    throw Error(ErrorCode::kInvalidConfig,
                "block " + std::to_string(depth) + " is already factorized");
  }
  require_same_shape(x_, x_shifted_, "block streams");
  try {
    original_ = block_forward(original_params_, dims_, x_);
    if (cfg_.shift_source == ShiftSource::kBlockEntry) {
      entry_shifted_ = block_forward(original_params_, dims_, x_shifted_);
    }
  } catch (const Error& e) {
    throw e.with_context("block " + std::to_string(depth));
  }
}

std::optional<LayerId> BlockCompressor::next_layer() const {
  if (done()) return std::nullopt;
  return kAllLayers[next_];
}

const CovarianceSet& BlockCompressor::covariance(LayerId id) const {
  const auto& c = group_cov_[input_group(id)];
  if (!c) throw Error(ErrorCode::kOrderViolation, "statistics for " + std::string(to_string(id)) +
                                                      " not collected yet");
  return *c;
}

const Matrix& BlockCompressor::original_layer_input(LayerId id) const {
  return layer_input(original_.cache, id);
}

const Matrix& BlockCompressor::shifted_layer_input(LayerId id) const {
  covariance(id);  // order check
  return group_shifted_[input_group(id)];
}

void BlockCompressor::prepare_group(LayerId id) {
  const std::size_t g = input_group(id);
  if (group_cov_[g]) return;
  if (cfg_.shift_source == ShiftSource::kBlockEntry) {
    group_shifted_[g] = layer_input(entry_shifted_->cache, id);
  } else {
    try {
      group_shifted_[g] = layer_input(block_forward(working_, dims_, x_shifted_).cache, id);
    } catch (const Error& e) {
      throw e.with_context(layer_label(depth_, id));
    }
  }
  const Matrix& xj = layer_input(original_.cache, id);
  CovarianceAccumulator acc(xj.rows());
  acc.accumulate(xj, group_shifted_[g]);
  group_cov_[g] = acc.finalize();
}

const LayerRecord& BlockCompressor::compress(LayerId id) {
  if (done() || kAllLayers[next_] != id) {
    throw Error(ErrorCode::kOrderViolation,
                layer_label(depth_, id) + " requested out of order; next is " +
                    (done() ? std::string("none") : std::string(to_string(kAllLayers[next_]))));
  }
  prepare_group(id);
  const CovarianceSet& cov = *group_cov_[input_group(id)];
  const Matrix& w = original_params_.at(id).weight();
  const Index k = rank_from_ratio(w.rows(), w.cols(), cfg_.ratio);

  // Solve every objective we need; failures of the non-selected variants
  // only blank their comparison column.
  std::array<std::optional<FactorizedLinear>, 4> solutions;
  std::array<std::optional<Error>, 4> failures;
  std::vector<Objective> wanted;
  for (Objective o : kAllObjectives) {
    if (cfg_.compare_objectives || o == cfg_.objective) wanted.push_back(o);
  }
  parallel_for(wanted.size(), [&](std::size_t i) {
    const auto slot = static_cast<std::size_t>(wanted[i]);
    try {
      solutions[slot] = compress_with_objective(w, cov, k, wanted[i], cfg_.solve);
    } catch (const Error& e) {
      failures[slot] = e;
    }
  });
  const auto chosen = static_cast<std::size_t>(cfg_.objective);
  if (failures[chosen]) throw failures[chosen]->with_context(layer_label(depth_, id));

  LayerRecord rec;
  rec.block = depth_;
  rec.layer = id;
  rec.out_dim = w.rows();
  rec.in_dim = w.cols();
  rec.rank = k;
  rec.objective = cfg_.objective;
  rec.params_before = static_cast<std::int64_t>(w.size());
  rec.params_after = solutions[chosen]->parameter_count();
  rec.degenerate = solutions[chosen]->degenerate;
  try {
    const Score own = own_score(w, *solutions[chosen], cov, cfg_.objective, k, cfg_.solve);
    rec.objective_value = own.value;
    rec.objective_optimum = own.optimum;
  } catch (const Error& e) {
    throw e.with_context(layer_label(depth_, id));
  }
  rec.anchored_values.fill(kNaN);
  for (std::size_t i = 0; i < solutions.size(); ++i) {
    if (solutions[i]) rec.anchored_values[i] = objective_error(w, *solutions[i], cov);
  }
  try {
    rec.anchored_optimum = closed_form_optimum(w, cov, k, cfg_.solve);
  } catch (const Error&) {
    rec.anchored_optimum = kNaN;
  }

  working_.at(id) = Linear(std::move(*solutions[chosen]));
  ++next_;
  records_.push_back(rec);
  return records_.back();
}

void BlockCompressor::compress_all() {
  while (auto id = next_layer()) compress(*id);
}

// ---------------------------------------------------------------- model run

CompressResult compress_model(const ToyModel& model, const CalibrationSet& calib,
                              const RunConfig& cfg) {
  cfg.validate();
  model.validate();
  if (calib.inputs.rows() != model.dims.d_model || calib.seq_len != model.dims.seq_len ||
      calib.inputs.cols() != calib.sequences * calib.seq_len) {
    throw Error(ErrorCode::kDimensionMismatch,
                "calibration " + shape_str(calib.inputs) + " with seq_len " +
                    std::to_string(calib.seq_len) + " does not fit the model");
  }

  CompressResult out;
  out.model.dims = model.dims;
  out.model.embed_seed = model.embed_seed;
  out.report.run_id = cfg.run_id;

  Matrix x = calib.inputs;
  Matrix x_shifted = calib.inputs;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const int depth = static_cast<int>(i) + 1;
    const BlockParams& original = model.blocks[i];
    BlockCompressor compressor(original, model.dims, x, x_shifted, cfg, depth);
    compressor.compress_all();
    for (const auto& r : compressor.records()) out.report.layers.push_back(r);

    BlockRecord rec;
    rec.block = depth;
    BlockParams working = compressor.working();
    if (cfg.refine_enabled) {
      try {
        RefineResult refined =
            refine_block(original, working, model.dims, x, x_shifted, cfg.refine,
                         split_seed(cfg.seed, seed_stream::kShuffle, i));
        working = std::move(refined.refined);
        rec.refined = true;
        rec.refine_initial_loss = refined.initial_loss;
        rec.refine_final_loss = refined.final_loss;
        rec.loss_trace = std::move(refined.loss_trace);
      } catch (const Error& e) {
        throw e.with_context("block " + std::to_string(depth) + " refinement");
      }
    }

    Matrix y_shifted;
    try {
      y_shifted = block_forward(working, model.dims, x_shifted).y;
    } catch (const Error& e) {
      throw e.with_context("block " + std::to_string(depth));
    }
    rec.mse = mse(compressor.original_output(), y_shifted);
    rec.cosine = cosine_distance(compressor.original_output(), y_shifted);
    out.report.blocks.push_back(std::move(rec));

    x = compressor.original_output();
    x_shifted = std::move(y_shifted);
    out.model.blocks.push_back(std::move(working));
  }
  out.report.totals = accounting(model, out.model);
  return out;
}

// ---------------------------------------------------------------- storage

std::vector<NamedTensor> model_tensors(const ToyModel& model) {
  model.validate();
  std::vector<NamedTensor> t;
  Matrix meta(1, 7);
  meta << static_cast<double>(model.dims.d_model), static_cast<double>(model.dims.n_heads),
      static_cast<double>(model.dims.d_ff), static_cast<double>(model.dims.seq_len),
      static_cast<double>(model.n_blocks()), static_cast<double>(model.embed_seed >> 32),
      static_cast<double>(model.embed_seed & 0xffffffffULL);
  t.push_back({"meta", meta});
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const BlockParams& b = model.blocks[i];
    const std::string p = block_prefix(i);
    for (LayerId id : kAllLayers) {
      const std::string base = p + std::string(to_string(id));
      const Linear& l = b.at(id);
      if (l.is_factorized()) {
        const FactorizedLinear& f = l.factors();
        t.push_back({base + ".u", f.u});
        t.push_back({base + ".v", f.v});
        Matrix info(1, 2);
        info << static_cast<double>(f.objective_used), f.degenerate ? 1.0 : 0.0;
        t.push_back({base + ".info", info});
      } else {
        t.push_back({base + ".weight", l.weight()});
      }
    }
    t.push_back({p + "norm1.scale", row_vector(b.norm1_scale)});
    t.push_back({p + "norm2.scale", row_vector(b.norm2_scale)});
  }
  return t;
}

ToyModel model_from_tensors(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Matrix*, std::less<>> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.value;
  std::size_t used = 0;
  auto take = [&](const std::string& name) -> const Matrix* {
    auto it = by_name.find(name);
    if (it == by_name.end()) return nullptr;
    ++used;
    return it->second;
  };
  auto require = [&](const std::string& name) -> const Matrix& {
    const Matrix* m = take(name);
    if (!m) throw Error(ErrorCode::kCorruptContainer, "missing tensor '" + name + "'");
    return *m;
  };

  const Matrix& meta = require("meta");
  if (meta.rows() != 1 || meta.cols() != 7) {
    throw Error(ErrorCode::kCorruptContainer, "meta must be 1x7, got " + shape_str(meta));
  }
  ToyModel m;
  m.dims.d_model = static_cast<Index>(exact_index(meta(0, 0), "d_model"));
  m.dims.n_heads = static_cast<Index>(exact_index(meta(0, 1), "n_heads"));
  m.dims.d_ff = static_cast<Index>(exact_index(meta(0, 2), "d_ff"));
  m.dims.seq_len = static_cast<Index>(exact_index(meta(0, 3), "seq_len"));
  const auto n_blocks = static_cast<std::size_t>(exact_index(meta(0, 4), "n_blocks"));
  m.embed_seed = (static_cast<std::uint64_t>(exact_index(meta(0, 5), "seed")) << 32) |
                 static_cast<std::uint64_t>(exact_index(meta(0, 6), "seed"));
  m.dims.validate();

  for (std::size_t i = 0; i < n_blocks; ++i) {
    const std::string p = block_prefix(i);
    BlockParams b;
    for (LayerId id : kAllLayers) {
      const std::string base = p + std::string(to_string(id));
      const Matrix* w = take(base + ".weight");
      const Matrix* u = take(base + ".u");
      const Matrix* v = take(base + ".v");
      const Matrix* info = take(base + ".info");
      if (w && !u && !v && !info) {
        b.at(id) = Linear(*w);
      } else if (!w && u && v && info) {
        if (info->rows() != 1 || info->cols() != 2 || (*info)(0, 0) < 0 || (*info)(0, 0) > 3) {
          throw Error(ErrorCode::kCorruptContainer, "bad info record for " + base);
        }
        if (u->cols() != v->cols()) {
          throw Error(ErrorCode::kDimensionMismatch, base + " factors disagree on rank");
        }
        FactorizedLinear f;
        f.u = *u;
        f.v = *v;
        f.objective_used = static_cast<Objective>(static_cast<int>((*info)(0, 0)));
        f.degenerate = (*info)(0, 1) != 0.0;
        b.at(id) = Linear(std::move(f));
      } else {
        throw Error(ErrorCode::kCorruptContainer,
                    base + " must be stored either dense or as a u/v/info triple");
      }
    }
    b.norm1_scale = to_vector(require(p + "norm1.scale"), m.dims.d_model, p + "norm1.scale");
    b.norm2_scale = to_vector(require(p + "norm2.scale"), m.dims.d_model, p + "norm2.scale");
    m.blocks.push_back(std::move(b));
  }
  if (used != tensors.size()) {
    throw Error(ErrorCode::kCorruptContainer, "container holds tensors that are not part of a " +
                                                  std::to_string(n_blocks) + "-block model");
  }
  m.validate();
  return m;
}

void save_model(const std::filesystem::path& path, const ToyModel& model) {
  save_container(path, model_tensors(model));
}

ToyModel load_model(const std::filesystem::path& path) {
  return model_from_tensors(load_container(path));
}

std::vector<NamedTensor> covariance_tensors(const CovarianceSet& cov) {
  Matrix columns(1, 1);
  columns(0, 0) = static_cast<double>(cov.columns);
  return {{"cov.cross", cov.cross},
          {"cov.shifted_gram", cov.shifted_gram},
          {"cov.original_gram", cov.original_gram},
          {"cov.columns", columns}};
}

CovarianceSet covariance_from_tensors(const std::vector<NamedTensor>& tensors) {
  CovarianceSet cov;
  bool seen[4] = {false, false, false, false};
  for (const auto& t : tensors) {
    if (t.name == "cov.cross") {
      cov.cross = t.value;
      seen[0] = true;
    } else if (t.name == "cov.shifted_gram") {
      cov.shifted_gram = t.value;
      seen[1] = true;
    } else if (t.name == "cov.original_gram") {
      cov.original_gram = t.value;
      seen[2] = true;
    } else if (t.name == "cov.columns" && t.value.size() == 1) {
      cov.columns = static_cast<std::int64_t>(exact_index(t.value(0, 0), "columns"));
      seen[3] = true;
    } else {
      throw Error(ErrorCode::kCorruptContainer, "unexpected tensor '" + t.name + "'");
    }
  }
  if (!(seen[0] && seen[1] && seen[2] && seen[3])) {
    throw Error(ErrorCode::kCorruptContainer, "covariance container is incomplete");
  }
  const Index n = cov.cross.rows();
  if (cov.cross.cols() != n || cov.shifted_gram.rows() != n || cov.shifted_gram.cols() != n ||
      cov.original_gram.rows() != n || cov.original_gram.cols() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "covariance blocks disagree in size");
  }
  return cov;
}

void save_covariance(const std::filesystem::path& path, const CovarianceSet& cov) {
  save_container(path, covariance_tensors(cov));
}

CovarianceSet load_covariance(const std::filesystem::path& path) {
  return covariance_from_tensors(load_container(path));
}

}  // namespace aasvd
