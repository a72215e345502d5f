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


#include "aasvd/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace aasvd {
namespace {

std::string csv_line(std::initializer_list<std::string> fields) {
  std::string out;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out += ',';
    out += f;
    first = false;
  }
  out += '\n';
  return out;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    parts.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_site(std::string_view s, Site& out) {
  for (Site site : kAllSites) {
    if (to_string(site) == s) {
      out = site;
      return true;
    }
  }
  return false;
}

}  // namespace

double mse(const Matrix& y, const Matrix& y_prime) {
  require_same_shape(y, y_prime, "mse");
  if (y.size() == 0) return 0.0;
  return (y - y_prime).squaredNorm() / static_cast<double>(y.size());
}

double cosine_distance(const Matrix& y, const Matrix& y_prime) {
  require_same_shape(y, y_prime, "cosine_distance");
  if (y.cols() == 0) return 0.0;
  double total = 0.0;
  for (Index t = 0; t < y.cols(); ++t) {
    const double a = y.col(t).norm();
    const double b = y_prime.col(t).norm();
    const bool a_zero = a < kNearZeroNorm;
    const bool b_zero = b < kNearZeroNorm;
    if (a_zero || b_zero) {
      total += (a_zero && b_zero) ? 0.0 : 1.0;
      continue;
    }
    // 1 - cos = |a/|a| - b/|b||^2 / 2, which stays exact for equal columns.
    const double gap = (y.col(t) / a - y_prime.col(t) / b).squaredNorm();
    total += std::clamp(0.5 * gap, 0.0, 2.0);
  }
  return total / static_cast<double>(y.cols());
}

LayerAccount account_layer(Index out_dim, Index in_dim, Index rank) {
  LayerAccount a;
  a.out_dim = out_dim;
  a.in_dim = in_dim;
  a.rank = rank;
  a.params_before = static_cast<std::int64_t>(out_dim) * in_dim;
  a.flops_before = a.params_before;
  a.params_after =
      rank > 0 ? static_cast<std::int64_t>(rank) * (out_dim + in_dim) : a.params_before;
  a.flops_after = a.params_after;
  return a;
}

AccountingTotals summarize_accounts(std::vector<LayerAccount> layers,
                                    std::int64_t other_params_before,
                                    std::int64_t other_params_after) {
  AccountingTotals t;
  std::int64_t dense_of_factorized = 0;
  std::int64_t factors_of_factorized = 0;
  std::int64_t rank_sum = 0;
  std::int64_t min_dim_sum = 0;
  for (const auto& l : layers) {
    t.linear_params_before += l.params_before;
    t.linear_params_after += l.params_after;
    t.flops_before += l.flops_before;
    t.flops_after += l.flops_after;
    if (l.factorized()) {
      ++t.factorized_layers;
      dense_of_factorized += l.params_before;
      factors_of_factorized += l.params_after;
      rank_sum += l.rank;
      min_dim_sum += std::min(l.out_dim, l.in_dim);
    }
  }
  t.total_params_before = t.linear_params_before + other_params_before;
  t.total_params_after = t.linear_params_after + other_params_after;
  t.effective_ratio = dense_of_factorized > 0 ? static_cast<double>(factors_of_factorized) /
                                                    static_cast<double>(dense_of_factorized)
                                              : 1.0;
  t.rank_fraction = min_dim_sum > 0
                        ? static_cast<double>(rank_sum) / static_cast<double>(min_dim_sum)
                        : 1.0;
  t.flop_reduction = t.flops_after > 0 ? static_cast<double>(t.flops_before) /
                                             static_cast<double>(t.flops_after)
                                       : 0.0;
  t.layers = std::move(layers);
  return t;
}

AccountingTotals accounting(const ToyModel& before, const ToyModel& after) {
  if (!(before.dims == after.dims) || before.blocks.size() != after.blocks.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "models have different architectures");
  }
  std::vector<LayerAccount> layers;
  std::int64_t other_before = 0;
  std::int64_t other_after = 0;
  for (std::size_t i = 0; i < before.blocks.size(); ++i) {
    const BlockParams& b = before.blocks[i];
    const BlockParams& a = after.blocks[i];
    for (LayerId id : kAllLayers) {
      const auto [m, n] = layer_shape(before.dims, id);
      if (b.at(id).out_dim() != m || b.at(id).in_dim() != n || a.at(id).out_dim() != m ||
          a.at(id).in_dim() != n) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "block " + std::to_string(i + 1) + " " + std::string(to_string(id)) +
                        " has the wrong shape");
      }
      const Index k = a.at(id).is_factorized() ? a.at(id).factors().rank() : 0;
      LayerAccount acc = account_layer(m, n, k);
      acc.block = static_cast<int>(i) + 1;
      acc.layer = id;
      layers.push_back(acc);
    }
    other_before += b.norm1_scale.size() + b.norm2_scale.size();
    other_after += a.norm1_scale.size() + a.norm2_scale.size();
  }
  return summarize_accounts(std::move(layers), other_before, other_after);
}

std::string_view to_string(Site site) {
  switch (site) {
    case Site::kOProj:
      return "o_proj";
    case Site::kMlpDown:
      return "mlp_down";
    case Site::kBlockOut:
      return "block_out";
  }
  return "unknown";
}

std::vector<DepthErrors> error_evolution(const ToyModel& original, const ToyModel& compressed,
                                         const Matrix& inputs) {
  if (!(original.dims == compressed.dims) ||
      original.blocks.size() != compressed.blocks.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "models have different architectures");
  }
  std::vector<DepthErrors> rows;
  Matrix x = inputs;
  Matrix xc = inputs;
  for (std::size_t i = 0; i < original.blocks.size(); ++i) {
    ForwardResult a;
    ForwardResult b;
    try {
      a = block_forward(original.blocks[i], original.dims, x);
      b = block_forward(compressed.blocks[i], compressed.dims, xc);
    } catch (const Error& e) {
      throw e.with_context("block " + std::to_string(i + 1));
    }
    DepthErrors d;
    d.block = static_cast<int>(i) + 1;
    const std::array<const Matrix*, 3> lhs = {&a.cache.o_out, &a.cache.mlp_out, &a.y};
    const std::array<const Matrix*, 3> rhs = {&b.cache.o_out, &b.cache.mlp_out, &b.y};
    for (std::size_t s = 0; s < 3; ++s) {
      d.mse[s] = mse(*lhs[s], *rhs[s]);
      d.cosine[s] = cosine_distance(*lhs[s], *rhs[s]);
    }
    rows.push_back(d);
    x = std::move(a.y);
    xc = std::move(b.y);
  }
  return rows;
}

std::vector<DepthErrors> error_evolution(const ToyModel& original, const ToyModel& compressed,
                                         const CalibrationSet& eval_set) {
  return error_evolution(original, compressed, eval_set.inputs);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string evolution_csv(std::string_view run_id, const std::vector<DepthErrors>& rows) {
  std::string out = std::string(kEvolutionHeader) + "\n";
  const std::string id(run_id);
  for (const auto& d : rows) {
    for (Site s : kAllSites) {
      const auto i = static_cast<std::size_t>(s);
      const std::string block = std::to_string(d.block);
      const std::string site(to_string(s));
      out += csv_line({id, block, site, "mse", format_double(d.mse[i])});
      out += csv_line({id, block, site, "cosine", format_double(d.cosine[i])});
    }
  }
  return out;
}

std::string layers_csv(std::string_view run_id, const std::vector<LayerRecord>& layers) {
  std::string out =
      "run_id,block,layer,out_dim,in_dim,rank,objective,objective_value,objective_optimum,"
      "anchored_input_agnostic,anchored_input_aware,anchored_shift_aware,anchored_anchored,"
      "anchored_optimum,params_before,params_after,degenerate\n";
  const std::string id(run_id);
  for (const auto& r : layers) {
    out += csv_line({id, std::to_string(r.block), std::string(to_string(r.layer)),
                     std::to_string(r.out_dim), std::to_string(r.in_dim), std::to_string(r.rank),
                     std::string(to_string(r.objective)), format_double(r.objective_value),
                     format_double(r.objective_optimum), format_double(r.anchored_values[0]),
                     format_double(r.anchored_values[1]), format_double(r.anchored_values[2]),
                     format_double(r.anchored_values[3]), format_double(r.anchored_optimum),
                     std::to_string(r.params_before), std::to_string(r.params_after),
                     r.degenerate ? "1" : "0"});
  }
  return out;
}

std::string blocks_csv(std::string_view run_id, const std::vector<BlockRecord>& blocks) {
  std::string out = "run_id,block,mse,cosine,refined,refine_initial_loss,refine_final_loss\n";
  const std::string id(run_id);
  for (const auto& b : blocks) {
    out += csv_line({id, std::to_string(b.block), format_double(b.mse), format_double(b.cosine),
                     b.refined ? "1" : "0", format_double(b.refine_initial_loss),
                     format_double(b.refine_final_loss)});
  }
  return out;
}

std::string refine_trace_csv(std::string_view run_id, const std::vector<BlockRecord>& blocks) {
  std::string out = "run_id,block,epoch,loss\n";
  const std::string id(run_id);
  for (const auto& b : blocks) {
    for (std::size_t e = 0; e < b.loss_trace.size(); ++e) {
      out += csv_line({id, std::to_string(b.block), std::to_string(e + 1),
                       format_double(b.loss_trace[e])});
    }
  }
  return out;
}

std::string accounting_json(const AccountingTotals& totals) {
  nlohmann::ordered_json j;
  j["linear_params_before"] = totals.linear_params_before;
  j["linear_params_after"] = totals.linear_params_after;
  j["total_params_before"] = totals.total_params_before;
  j["total_params_after"] = totals.total_params_after;
  j["flops_per_token_before"] = totals.flops_before;
  j["flops_per_token_after"] = totals.flops_after;
  j["flop_reduction"] = totals.flop_reduction;
  j["effective_ratio"] = totals.effective_ratio;
  j["rank_fraction"] = totals.rank_fraction;
  j["factorized_layers"] = totals.factorized_layers;
  j["remap_regime"] = totals.remap_regime();
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : totals.layers) {
    nlohmann::ordered_json r;
    r["block"] = l.block;
    r["layer"] = std::string(to_string(l.layer));
    r["out_dim"] = l.out_dim;
    r["in_dim"] = l.in_dim;
    r["rank"] = l.rank;
    r["params_before"] = l.params_before;
    r["params_after"] = l.params_after;
    layers.push_back(std::move(r));
  }
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

std::vector<EvolutionEntry> parse_evolution_csv(std::string_view text) {
  std::vector<EvolutionEntry> rows;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line != kEvolutionHeader) {
        throw Error(ErrorCode::kInvalidConfig, "line 1: expected header '" +
                                                   std::string(kEvolutionHeader) + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    auto bad = [&](const std::string& why) {
      return Error(ErrorCode::kInvalidConfig, "line " + std::to_string(line_no) + ": " + why);
    };
    if (f.size() != 5) throw bad("expected 5 fields, found " + std::to_string(f.size()));
    EvolutionEntry e;
    e.run_id = std::string(f[0]);
    if (!parse_number(f[1], e.block) || e.block < 1) throw bad("bad block index");
    if (!parse_site(f[2], e.site)) throw bad("unknown site '" + std::string(f[2]) + "'");
    if (f[3] != "mse" && f[3] != "cosine") throw bad("unknown metric '" + std::string(f[3]) + "'");
    e.metric = std::string(f[3]);
    if (!parse_number(f[4], e.value)) throw bad("bad value '" + std::string(f[4]) + "'");
    rows.push_back(std::move(e));
  }
  if (line_no == 0) throw Error(ErrorCode::kInvalidConfig, "line 1: missing header");
  return rows;
}

AccountingTotals parse_accounting_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("accounting.json: ") + e.what());
  }
  AccountingTotals t;
  try {
    t.linear_params_before = j.at("linear_params_before").get<std::int64_t>();
    t.linear_params_after = j.at("linear_params_after").get<std::int64_t>();
    t.total_params_before = j.at("total_params_before").get<std::int64_t>();
    t.total_params_after = j.at("total_params_after").get<std::int64_t>();
    t.flops_before = j.at("flops_per_token_before").get<std::int64_t>();
    t.flops_after = j.at("flops_per_token_after").get<std::int64_t>();
    t.flop_reduction = j.at("flop_reduction").get<double>();
    t.effective_ratio = j.at("effective_ratio").get<double>();
    t.rank_fraction = j.at("rank_fraction").get<double>();
    t.factorized_layers = j.at("factorized_layers").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("accounting.json: ") + e.what());
  }
  return t;
}

}  // namespace aasvd
