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


#include "aasvd/config.hpp"

#include <set>

#include <json.hpp>

namespace aasvd {
namespace {

using nlohmann::json;

const std::set<std::string> kModelKeys = {"d_model", "n_heads", "d_ff", "seq_len", "n_blocks"};

json parse_object(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "config must be a JSON object");
  return j;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw Error(ErrorCode::kInvalidConfig, "unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw Error(ErrorCode::kInvalidConfig, "");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw Error(ErrorCode::kInvalidConfig, "");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw Error(ErrorCode::kInvalidConfig, "");
    } else {
      if (!it->is_string()) throw Error(ErrorCode::kInvalidConfig, "");
    }
    return it->get<T>();
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidConfig, std::string("key '") + key + "' has the wrong type");
  }
}

std::uint64_t get_seed(const json& j, const char* key, std::uint64_t fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
    throw Error(ErrorCode::kInvalidConfig, std::string("key '") + key +
                                               "' must be a non-negative integer");
  }
  return it->get<std::uint64_t>();
}

Index positive(const json& j, const char* key, Index fallback) {
  const auto v = get<std::int64_t>(j, key, fallback);
  if (v < 1) throw Error(ErrorCode::kInvalidConfig, std::string(key) + " must be >= 1");
  return static_cast<Index>(v);
}

linalg::FactorMethod parse_method(const std::string& s) {
  if (s == "cholesky") return linalg::FactorMethod::kCholesky;
  if (s == "evd") return linalg::FactorMethod::kEvd;
  throw Error(ErrorCode::kInvalidConfig, "method must be cholesky or evd, got '" + s + "'");
}

SingularPolicy parse_singular(const std::string& s) {
  if (s == "fail") return SingularPolicy::kFail;
  if (s == "tikhonov") return SingularPolicy::kTikhonov;
  throw Error(ErrorCode::kInvalidConfig, "singular must be fail or tikhonov, got '" + s + "'");
}

RefineConfig parse_refine(const json& j) {
  reject_unknown(j,
                 {"base_lr", "epochs", "batch_size", "warmup_fraction", "weight_decay", "betas",
                  "adam_eps"},
                 "refine");
  RefineConfig r;
  r.base_lr = get<double>(j, "base_lr", r.base_lr);
  r.epochs = static_cast<int>(positive(j, "epochs", r.epochs));
  r.batch_size = static_cast<int>(positive(j, "batch_size", r.batch_size));
  r.warmup_fraction = get<double>(j, "warmup_fraction", r.warmup_fraction);
  r.weight_decay = get<double>(j, "weight_decay", r.weight_decay);
  r.adam_eps = get<double>(j, "adam_eps", r.adam_eps);
  if (auto it = j.find("betas"); it != j.end()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
      throw Error(ErrorCode::kInvalidConfig, "betas must be a pair of numbers");
    }
    r.beta1 = (*it)[0].get<double>();
    r.beta2 = (*it)[1].get<double>();
  }
  r.validate();
  return r;
}

}  // namespace

bool valid_run_id(std::string_view id) {
  if (id.empty()) return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

ModelSpec parse_model_spec(std::string_view json_text) {
  const json j = parse_object(json_text);
  auto allowed = kModelKeys;
  allowed.insert("seed");
  reject_unknown(j, allowed, "model config");
  ModelSpec s;
  s.dims.d_model = positive(j, "d_model", s.dims.d_model);
  s.dims.n_heads = positive(j, "n_heads", s.dims.n_heads);
  s.dims.d_ff = positive(j, "d_ff", s.dims.d_ff);
  s.dims.seq_len = positive(j, "seq_len", s.dims.seq_len);
  s.n_blocks = positive(j, "n_blocks", s.n_blocks);
  s.seed = get_seed(j, "seed", s.seed);
  s.dims.validate();
  return s;
}

RunSpec parse_run_spec(std::string_view json_text) {
  const json j = parse_object(json_text);
  auto allowed = kModelKeys;
  allowed.insert({"seed", "run_id", "ratio", "remap", "objective", "method", "singular",
                  "shift_source", "refine_enabled", "compare_objectives", "calibration_sequences",
                  "eval_sequences", "refine"});
  reject_unknown(j, allowed, "run config");

  RunSpec s;
  std::size_t dims_keys = 0;
  for (const auto& k : kModelKeys) dims_keys += j.contains(k) ? 1 : 0;
  if (dims_keys > 0) {
    const ModelSpec defaults;
    BlockDims d;
    d.d_model = positive(j, "d_model", defaults.dims.d_model);
    d.n_heads = positive(j, "n_heads", defaults.dims.n_heads);
    d.d_ff = positive(j, "d_ff", defaults.dims.d_ff);
    d.seq_len = positive(j, "seq_len", defaults.dims.seq_len);
    d.validate();
    s.dims = d;
    s.n_blocks = positive(j, "n_blocks", defaults.n_blocks);
  }
  if (j.contains("seed")) s.seed = get_seed(j, "seed", 0);

  RunConfig& r = s.run;
  r.run_id = get<std::string>(j, "run_id", r.run_id);
  if (!valid_run_id(r.run_id)) {
    throw Error(ErrorCode::kInvalidConfig,
                "run_id '" + r.run_id + "' may only use letters, digits, '_', '-' and '.'");
  }
  r.ratio.target_ratio = get<double>(j, "ratio", r.ratio.target_ratio);
  r.ratio.remap = get<bool>(j, "remap", r.ratio.remap);
  r.objective = parse_objective(get<std::string>(j, "objective", "anchored"));
  r.solve.method = parse_method(get<std::string>(j, "method", "cholesky"));
  r.solve.singular = parse_singular(get<std::string>(j, "singular", "fail"));
  r.shift_source = parse_shift_source(get<std::string>(j, "shift_source", "in_place"));
  r.refine_enabled = get<bool>(j, "refine_enabled", r.refine_enabled);
  r.compare_objectives = get<bool>(j, "compare_objectives", r.compare_objectives);
  if (auto it = j.find("refine"); it != j.end()) {
    if (!it->is_object()) throw Error(ErrorCode::kInvalidConfig, "refine must be an object");
    r.refine = parse_refine(*it);
  }
  s.calibration_sequences = positive(j, "calibration_sequences", s.calibration_sequences);
  s.eval_sequences = positive(j, "eval_sequences", s.eval_sequences);
  r.validate();
  return s;
}

std::string model_spec_json(const ModelSpec& spec) {
  nlohmann::ordered_json j;
  j["d_model"] = spec.dims.d_model;
  j["n_heads"] = spec.dims.n_heads;
  j["d_ff"] = spec.dims.d_ff;
  j["seq_len"] = spec.dims.seq_len;
  j["n_blocks"] = spec.n_blocks;
  j["seed"] = spec.seed;
  return j.dump(2) + "\n";
}

std::string run_spec_json(const RunSpec& spec) {
  nlohmann::ordered_json j;
  if (spec.dims) {
    j["d_model"] = spec.dims->d_model;
    j["n_heads"] = spec.dims->n_heads;
    j["d_ff"] = spec.dims->d_ff;
    j["seq_len"] = spec.dims->seq_len;
  }
  if (spec.n_blocks) j["n_blocks"] = *spec.n_blocks;
  if (spec.seed) j["seed"] = *spec.seed;
  const RunConfig& r = spec.run;
  j["run_id"] = r.run_id;
  j["ratio"] = r.ratio.target_ratio;
  j["remap"] = r.ratio.remap;
  j["objective"] = std::string(to_string(r.objective));
  j["method"] = r.solve.method == linalg::FactorMethod::kCholesky ? "cholesky" : "evd";
  j["singular"] = r.solve.singular == SingularPolicy::kFail ? "fail" : "tikhonov";
  j["shift_source"] = std::string(to_string(r.shift_source));
  j["refine_enabled"] = r.refine_enabled;
  j["compare_objectives"] = r.compare_objectives;
  j["calibration_sequences"] = spec.calibration_sequences;
  j["eval_sequences"] = spec.eval_sequences;
  nlohmann::ordered_json f;
  f["base_lr"] = r.refine.base_lr;
  f["epochs"] = r.refine.epochs;
  f["batch_size"] = r.refine.batch_size;
  f["warmup_fraction"] = r.refine.warmup_fraction;
  f["weight_decay"] = r.refine.weight_decay;
  f["betas"] = {r.refine.beta1, r.refine.beta2};
  f["adam_eps"] = r.refine.adam_eps;
  j["refine"] = f;
  return j.dump(2) + "\n";
}

}  // namespace aasvd
