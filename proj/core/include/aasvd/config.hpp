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

// JSON configuration documents.
//
// Model document: {"d_model", "n_heads", "d_ff", "seq_len", "n_blocks",
// "seed"}; omitted keys take the defaults below.
//
// Run document: the model keys (optional; when present they must match the
// model being compressed) plus
//   run_id, ratio, remap, objective, method, singular, shift_source,
//   refine_enabled, compare_objectives, seed, calibration_sequences,
//   eval_sequences, and a nested "refine" object with base_lr, epochs,
//   batch_size, warmup_fraction, weight_decay, betas [b1, b2], adam_eps.
// Unknown keys are rejected so typos do not silently fall back to defaults.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "aasvd/pipeline.hpp"

namespace aasvd {

struct ModelSpec {
  BlockDims dims{32, 4, 64, 16};
  Index n_blocks = 4;
  std::uint64_t seed = 0;
};

struct RunSpec {
  RunConfig run;
  std::optional<std::uint64_t> seed;  // falls back to the model's seed
  Index calibration_sequences = 128;
  Index eval_sequences = 32;
  // Present when the document names the architecture.
  std::optional<BlockDims> dims;
  std::optional<Index> n_blocks;
};

// Both throw kInvalidConfig (malformed JSON, wrong types, unknown keys,
// out-of-range values) or kInvalidDims.
ModelSpec parse_model_spec(std::string_view json_text);
RunSpec parse_run_spec(std::string_view json_text);

std::string model_spec_json(const ModelSpec& spec);
std::string run_spec_json(const RunSpec& spec);

// run_id goes into CSV rows unquoted: letters, digits, '_', '-', '.'.
bool valid_run_id(std::string_view id);

}  // namespace aasvd
