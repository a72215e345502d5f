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
#include <cmath>
#include <limits>
#include <json.hpp>

#include "aasvd/metrics.hpp"
#include "expect_code.hpp"
#include "oracles.hpp"

namespace aasvd {
namespace {

using testing_support::throws_code;

const BlockDims kDims{16, 4, 32, 4};

TEST(Cosine, Examples) {
  const Matrix y = oracle::random_matrix(5, 7, 1);
  EXPECT_NEAR(cosine_distance(y, y), 0.0, 1e-15);
  EXPECT_NEAR(cosine_distance(y, -y), 2.0, 1e-15);
  EXPECT_NEAR(cosine_distance(y, 3.0 * y), 0.0, 1e-15);
}

TEST(Cosine, ZeroColumnConvention) {
  const Matrix z = Matrix::Zero(3, 2);
  EXPECT_EQ(cosine_distance(z, z), 0.0);
  Matrix y = Matrix::Zero(3, 2);
  y(0, 0) = 1.0;
  y(1, 1) = 1.0;
  EXPECT_EQ(cosine_distance(y, z), 1.0);
}

TEST(Cosine, ColumnMeanOracle) {
  const Matrix a = oracle::random_matrix(4, 9, 2);
  const Matrix b = oracle::random_matrix(4, 9, 3);
  double total = 0.0;
  for (Index t = 0; t < 9; ++t) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (Index i = 0; i < 4; ++i) {
      dot += a(i, t) * b(i, t);
      na += a(i, t) * a(i, t);
      nb += b(i, t) * b(i, t);
    }
    total += 1.0 - dot / std::sqrt(na * nb);
  }
  EXPECT_NEAR(cosine_distance(a, b), total / 9.0, 1e-14);
}

TEST(Mse, Examples) {
  const Matrix y = oracle::random_matrix(3, 3, 1);
  EXPECT_EQ(mse(y, y), 0.0);
  EXPECT_EQ(mse(Matrix::Ones(4, 5), Matrix::Zero(4, 5)), 1.0);
}

TEST(Mse, ReorderedSumOracle) {
  const Matrix a = oracle::random_matrix(6, 11, 4);
  const Matrix b = oracle::random_matrix(6, 11, 5);
  double total = 0.0;
  for (Index i = a.size() - 1; i >= 0; --i) total += (a(i) - b(i)) * (a(i) - b(i));
  EXPECT_NEAR(mse(a, b), total / static_cast<double>(a.size()), 1e-12);
  EXPECT_TRUE(throws_code([] { (void)mse(Matrix::Zero(2, 2), Matrix::Zero(2, 3)); },
                          ErrorCode::kDimensionMismatch));
}

TEST(Accounting, LargeSquareLayer) {
  const LayerAccount l = account_layer(4096, 4096, 512);
  EXPECT_EQ(l.params_before, 16'777'216);
  EXPECT_EQ(l.params_after, 4'194'304);
  const AccountingTotals t = summarize_accounts({l}, 0, 0);
  EXPECT_DOUBLE_EQ(t.flop_reduction, 4.0);
  EXPECT_DOUBLE_EQ(t.rank_fraction, 0.125);
  EXPECT_DOUBLE_EQ(t.effective_ratio, 0.25);
  EXPECT_FALSE(t.remap_regime());
}

TEST(Accounting, FullRankSquareIsRemapRegime) {
  const AccountingTotals t = summarize_accounts({account_layer(64, 64, 64)}, 0, 0);
  EXPECT_EQ(t.linear_params_after, 2 * 64 * 64);
  EXPECT_DOUBLE_EQ(t.effective_ratio, 2.0);
  EXPECT_DOUBLE_EQ(t.rank_fraction, 1.0);
  EXPECT_TRUE(t.remap_regime());
}

TEST(Accounting, DenseLayersAndOtherParams) {
  const AccountingTotals t =
      summarize_accounts({account_layer(8, 4, 0), account_layer(8, 4, 2)}, 10, 10);
  EXPECT_EQ(t.linear_params_before, 64);
  EXPECT_EQ(t.linear_params_after, 32 + 24);
  EXPECT_EQ(t.total_params_before, 74);
  EXPECT_EQ(t.total_params_after, 66);
  EXPECT_EQ(t.factorized_layers, 1);
  EXPECT_DOUBLE_EQ(t.effective_ratio, 24.0 / 32.0);
}

TEST(Accounting, ToyModelTracksRatioPerLayer) {
  const ToyModel m = make_model(kDims, 2, 1);
  const CalibrationSet c = generate_calibration(kDims, 16, 2);
  RunConfig cfg;
  cfg.ratio = {0.5, false};
  const CompressResult r = compress_model(m, c, cfg);
  const AccountingTotals t = accounting(m, r.model);
  ASSERT_EQ(t.layers.size(), 14u);
  EXPECT_EQ(t.total_params_before, m.parameter_count());
  EXPECT_EQ(t.total_params_after, r.model.parameter_count());
  for (const LayerAccount& l : t.layers) {
    const double mn = static_cast<double>(l.out_dim * l.in_dim);
    const double per_rank = static_cast<double>(l.out_dim + l.in_dim) / mn;
    const double rho = static_cast<double>(l.params_after) / mn;
    EXPECT_LE(rho, 0.5 + 1e-12);
    EXPECT_GT(rho, 0.5 - per_rank - 1e-12);  // within one rank step
  }
  EXPECT_TRUE(throws_code([&] { (void)accounting(m, make_model(kDims, 3, 1)); },
                          ErrorCode::kDimensionMismatch));
}

TEST(ErrorEvolution, IdenticalModelsAreZero) {
  const ToyModel m = make_model(kDims, 3, 3);
  const CalibrationSet eval = generate_calibration(kDims, 4, 4);
  const auto rows = error_evolution(m, m, eval);
  ASSERT_EQ(rows.size(), 3u);
  for (const DepthErrors& d : rows) {
    for (Site s : kAllSites) {
      EXPECT_EQ(d.mse[static_cast<size_t>(s)], 0.0);
      EXPECT_EQ(d.cosine[static_cast<size_t>(s)], 0.0);
    }
  }
  EXPECT_EQ(rows[2].block, 3);
}

TEST(ErrorEvolution, LocalChangeShowsFromItsDepthOn) {
  const ToyModel m = make_model(kDims, 4, 5);
  ToyModel comp = m;
  const Matrix& w = m.blocks[2].at(LayerId::kUp).weight();
  const linalg::SvdTruncation t = linalg::truncated_svd(w, 3);
  FactorizedLinear f;
  f.u = w * t.v;
  f.v = t.v;
  comp.blocks[2] = replace_linear(comp.blocks[2], LayerId::kUp, f);
  const auto rows = error_evolution(m, comp, generate_calibration(kDims, 4, 6));
  for (const DepthErrors& d : rows) {
    const double out = d.mse[static_cast<size_t>(Site::kBlockOut)];
    if (d.block < 3) {
      EXPECT_EQ(out, 0.0) << d.block;
      EXPECT_EQ(d.cosine[static_cast<size_t>(Site::kBlockOut)], 0.0);
    } else {
      EXPECT_GT(out, 0.0) << d.block;
    }
  }
  EXPECT_EQ(rows[2].mse[static_cast<size_t>(Site::kOProj)], 0.0);  // upstream of mlp_up
  EXPECT_GT(rows[2].mse[static_cast<size_t>(Site::kMlpDown)], 0.0);
}

TEST(Formatting, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 123456789.0, 0.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(EvolutionCsv, RoundTrip) {
  std::vector<DepthErrors> rows(2);
  rows[0].block = 1;
  rows[1].block = 2;
  rows[1].mse = {0.1, 0.2, 1.0 / 3.0};
  rows[1].cosine = {1e-9, 0.5, 0.75};
  const std::string csv = evolution_csv("r1", rows);
  EXPECT_EQ(csv.substr(0, kEvolutionHeader.size()), kEvolutionHeader);
  const auto back = parse_evolution_csv(csv);
  ASSERT_EQ(back.size(), 12u);
  for (const EvolutionEntry& e : back) {
    EXPECT_EQ(e.run_id, "r1");
    const DepthErrors& d = rows[static_cast<size_t>(e.block - 1)];
    const auto& arr = e.metric == "mse" ? d.mse : d.cosine;
    EXPECT_EQ(e.value, arr[static_cast<size_t>(e.site)]);
  }
}

TEST(EvolutionCsv, HeaderOnlyAndErrors) {
  EXPECT_TRUE(parse_evolution_csv(std::string(kEvolutionHeader) + "\n").empty());
  const std::string bad = std::string(kEvolutionHeader) + "\nr,1,block_out,mse,0.1\nr,x,o_proj,mse,1\n";
  try {
    (void)parse_evolution_csv(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(throws_code([] { (void)parse_evolution_csv("a,b\n"); }, ErrorCode::kInvalidConfig));
  EXPECT_TRUE(throws_code(
      [] {
        (void)parse_evolution_csv(std::string(kEvolutionHeader) + "\nr,1,attn,mse,1\n");
      },
      ErrorCode::kInvalidConfig));
}

TEST(AccountingJson, RoundTrip) {
  const AccountingTotals t =
      summarize_accounts({account_layer(4096, 4096, 512), account_layer(10, 20, 0)}, 7, 7);
  const std::string text = accounting_json(t);
  const nlohmann::json j = nlohmann::json::parse(text);
  EXPECT_EQ(j.at("layers").size(), 2u);
  const AccountingTotals back = parse_accounting_json(text);
  EXPECT_EQ(back.linear_params_before, t.linear_params_before);
  EXPECT_EQ(back.total_params_after, t.total_params_after);
  EXPECT_EQ(back.flop_reduction, t.flop_reduction);
  EXPECT_EQ(back.rank_fraction, t.rank_fraction);
  EXPECT_TRUE(throws_code([] { (void)parse_accounting_json("{"); }, ErrorCode::kInvalidConfig));
}

TEST(ReportCsv, LayerAndBlockTables) {
  LayerRecord l;
  l.block = 2;
  l.layer = LayerId::kUp;
  l.rank = 3;
  l.anchored_values.fill(std::numeric_limits<double>::quiet_NaN());
  const std::string layers = layers_csv("x", {l});
  EXPECT_NE(layers.find("x,2,up_proj"), std::string::npos) << layers;
  BlockRecord b;
  b.block = 1;
  b.loss_trace = {0.5, 0.25};
  const std::string trace = refine_trace_csv("x", {b});
  EXPECT_NE(trace.find("0.25"), std::string::npos);
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 3);
  const std::string blocks = blocks_csv("x", {b});
  EXPECT_EQ(std::count(blocks.begin(), blocks.end(), '\n'), 2);
}

}  // namespace
}  // namespace aasvd
