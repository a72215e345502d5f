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

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "aasvd/container.hpp"
#include "aasvd/parallel.hpp"
#include "aasvd/pipeline.hpp"
#include "aasvd/rng.hpp"
#include "expect_code.hpp"
#include "oracles.hpp"

namespace aasvd {
namespace {

namespace fs = std::filesystem;
using testing_support::throws_code;

// Four heads keep X' of o_proj full rank at ratio 0.5 (rank <= heads * k).
const BlockDims kDims{16, 4, 32, 4};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "aasvd_test_pipeline";
  fs::create_directories(dir);
  return dir / name;
}

CovarianceSet stats(const Matrix& a, const Matrix& b) {
  CovarianceAccumulator acc(a.rows());
  acc.accumulate(a, b);
  return acc.finalize();
}

// Chained outputs of every block.
std::vector<Matrix> depth_outputs(const ToyModel& m, const Matrix& x) {
  std::vector<Matrix> out;
  Matrix h = x;
  for (const BlockParams& b : m.blocks) {
    h = block_forward(b, m.dims, h).y;
    out.push_back(h);
  }
  return out;
}

RunConfig plain(double ratio, bool remap = false) {
  RunConfig cfg;
  cfg.ratio = {ratio, remap};
  cfg.refine_enabled = false;
  return cfg;
}

// ---------------------------------------------------------------- seeding

TEST(SplitSeed, StableAndSeparated) {
  EXPECT_EQ(split_seed(7, "model", 2), split_seed(7, "model", 2));
  std::set<std::uint64_t> seen;
  for (std::string_view s : {seed_stream::kModel, seed_stream::kCalibration, seed_stream::kEval,
                             seed_stream::kShuffle}) {
    for (std::uint64_t i = 0; i < 4; ++i) {
      for (std::uint64_t root = 0; root < 3; ++root) seen.insert(split_seed(root, s, i));
    }
  }
  EXPECT_EQ(seen.size(), 4u * 4u * 3u);
}

// ---------------------------------------------------------------- threads

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  parallel_for(0, [](std::size_t) { FAIL(); });
}

TEST(ParallelFor, RethrowsLowestIndexFailure) {
  try {
    parallel_for(20, [](std::size_t i) {
      if (i == 13 || i == 5 || i == 17) throw std::runtime_error("task " + std::to_string(i));
    });
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "task 5");
  }
}

TEST(ParallelFor, ThreadCapFromEnvironment) {
  const char* old = std::getenv("AASVD_THREADS");
  const std::string keep = old ? old : "";
  ::setenv("AASVD_THREADS", "3", 1);
  EXPECT_EQ(max_threads(), 3);
  ::setenv("AASVD_THREADS", "zero", 1);
  EXPECT_GE(max_threads(), 1);
  if (old) {
    ::setenv("AASVD_THREADS", keep.c_str(), 1);
  } else {
    ::unsetenv("AASVD_THREADS");
  }
}

// ---------------------------------------------------------------- data

TEST(Calibration, SameSeedSameBytes) {
  const CalibrationSet a = generate_calibration(kDims, 1, 42);
  const CalibrationSet b = generate_calibration(kDims, 1, 42);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_NE(a.inputs, generate_calibration(kDims, 1, 43).inputs);
}

TEST(Calibration, UnitRmsPerSequence) {
  const CalibrationSet c = generate_calibration(kDims, 9, 3);
  for (Index s = 0; s < 9; ++s) {
    const Matrix seq = c.inputs.middleCols(s * 4, 4);
    const double rms = std::sqrt(seq.squaredNorm() / static_cast<double>(seq.size()));
    EXPECT_NEAR(rms, 1.0, 1e-12);
  }
}

TEST(Calibration, ColumnCount) {
  const CalibrationSet c = generate_calibration({32, 4, 64, 16}, 256, 0);
  EXPECT_EQ(c.inputs.cols(), 4096);
  EXPECT_EQ(c.inputs.rows(), 32);
  EXPECT_EQ(c.sequences, 256);
  EXPECT_EQ(c.seq_len, 16);
}

TEST(Calibration, Anisotropic) {
  const CalibrationSet c = generate_calibration({32, 4, 64, 16}, 256, 1);
  const double first = c.inputs.row(0).squaredNorm();
  const double last = c.inputs.row(31).squaredNorm();
  EXPECT_GT(first / last, 20.0);  // std ratio 10, so energy ratio ~100
}

// ---------------------------------------------------------------- model

TEST(Model, SeededBlocksAndForward) {
  const ToyModel m = make_model(kDims, 3, 5);
  EXPECT_EQ(m.n_blocks(), 3);
  EXPECT_EQ(m.blocks[1].at(LayerId::kQ).weight(),
            init_block(kDims, split_seed(5, "model", 1)).at(LayerId::kQ).weight());
  EXPECT_EQ(m.parameter_count(), 3 * (4 * 256 + 3 * 16 * 32 + 2 * 16));
  const Matrix x = oracle::random_matrix(16, 8, 1);
  EXPECT_EQ(model_forward(m, x), depth_outputs(m, x).back());
  EXPECT_TRUE(throws_code([] { (void)make_model(kDims, 0, 1); }, ErrorCode::kInvalidDims));
}

// ---------------------------------------------------------------- compressor

TEST(BlockCompressorTest, FirstLayerSeesUnshiftedInput) {
  const ToyModel m = make_model(kDims, 1, 2);
  const CalibrationSet c = generate_calibration(kDims, 16, 3);
  BlockCompressor bc(m.blocks[0], kDims, c.inputs, c.inputs, plain(0.5), 1);
  bc.compress(LayerId::kQ);
  EXPECT_EQ(bc.original_layer_input(LayerId::kQ), bc.shifted_layer_input(LayerId::kQ));
  const CovarianceSet& cov = bc.covariance(LayerId::kQ);
  EXPECT_EQ(cov.cross, cov.original_gram);
}

TEST(BlockCompressorTest, LaterGroupsSeeShiftedInput) {
  const ToyModel m = make_model(kDims, 1, 2);
  const CalibrationSet c = generate_calibration(kDims, 16, 3);
  BlockCompressor bc(m.blocks[0], kDims, c.inputs, c.inputs, plain(0.5), 1);
  bc.compress_all();
  EXPECT_TRUE(bc.done());
  EXPECT_EQ(bc.records().size(), 7u);
  const ForwardResult orig = block_forward(m.blocks[0], kDims, c.inputs);
  for (LayerId id : kAllLayers) {
    const Matrix& a = bc.original_layer_input(id);
    const Matrix& b = bc.shifted_layer_input(id);
    ASSERT_EQ(a.cols(), b.cols());  // token-aligned streams
    EXPECT_LE((a - layer_input(orig.cache, id)).cwiseAbs().maxCoeff(), 1e-12);
    if (id == LayerId::kO || id == LayerId::kDown) EXPECT_GT((a - b).norm(), 0.0);
  }
}

TEST(BlockCompressorTest, OrderViolation) {
  const ToyModel m = make_model(kDims, 1, 2);
  const CalibrationSet c = generate_calibration(kDims, 4, 3);
  BlockCompressor bc(m.blocks[0], kDims, c.inputs, c.inputs, plain(0.5), 1);
  EXPECT_TRUE(throws_code([&] { bc.compress(LayerId::kO); }, ErrorCode::kOrderViolation));
  EXPECT_TRUE(throws_code([&] { (void)bc.covariance(LayerId::kDown); }, ErrorCode::kOrderViolation));
  bc.compress(LayerId::kQ);
  EXPECT_TRUE(throws_code([&] { bc.compress(LayerId::kQ); }, ErrorCode::kOrderViolation));
  EXPECT_EQ(bc.next_layer(), LayerId::kK);
}

TEST(BlockCompressorTest, MisalignedStreamsRejected) {
  const ToyModel m = make_model(kDims, 1, 2);
  EXPECT_TRUE(throws_code(
      [&] {
        BlockCompressor bc(m.blocks[0], kDims, oracle::random_matrix(16, 8, 1),
                           oracle::random_matrix(16, 12, 2), plain(0.5), 1);
      },
      ErrorCode::kDimensionMismatch));
}

TEST(BlockCompressorTest, AnchoredDominatesOnEveryLayer) {
  const ToyModel m = make_model(kDims, 3, 4);
  const CalibrationSet c = generate_calibration(kDims, 24, 5);
  const CompressResult r = compress_model(m, c, plain(0.5));
  ASSERT_EQ(r.report.layers.size(), 21u);
  for (const LayerRecord& rec : r.report.layers) {
    const double a = rec.anchored_values[static_cast<size_t>(Objective::kAnchored)];
    EXPECT_NEAR(a, rec.anchored_optimum, 1e-8 * std::max(1.0, a));
    for (double v : rec.anchored_values) {
      ASSERT_TRUE(std::isfinite(v));
      EXPECT_LE(a, v + 1e-9 * std::max(1.0, std::abs(v)));
    }
  }
}

// ---------------------------------------------------------------- model runs

TEST(CompressModel, FullRankReproducesOutputs) {
  const ToyModel m = make_model(kDims, 3, 6);
  const CalibrationSet c = generate_calibration(kDims, 16, 7);
  const CompressResult r = compress_model(m, c, plain(1.0, true));
  const Matrix x = generate_calibration(kDims, 8, 8).inputs;
  const auto a = depth_outputs(m, x);
  const auto b = depth_outputs(r.model, x);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_LE((a[i] - b[i]).cwiseAbs().maxCoeff(), 1e-8) << "block " << i + 1;
  }
  for (const LayerRecord& rec : r.report.layers) {
    EXPECT_EQ(rec.rank, std::min(rec.out_dim, rec.in_dim));
  }
}

TEST(CompressModel, InputAwareRecordsHitIndependentOptimum) {
  const ToyModel m = make_model(kDims, 1, 9);
  const CalibrationSet c = generate_calibration(kDims, 32, 10);
  RunConfig cfg = plain(0.5);
  cfg.objective = Objective::kInputAware;
  const CompressResult r = compress_model(m, c, cfg);
  const ForwardResult orig = block_forward(m.blocks[0], kDims, c.inputs);
  ASSERT_EQ(r.report.layers.size(), 7u);
  for (const LayerRecord& rec : r.report.layers) {
    const Matrix& xj = layer_input(orig.cache, rec.layer);
    const Matrix& w = m.blocks[0].at(rec.layer).weight();
    const double expected = closed_form_optimum(w, stats(xj, xj), rec.rank);
    const double measured =
        objective_error(w, r.model.blocks[0].at(rec.layer).factors(), xj, xj);
    EXPECT_NEAR(rec.objective_value, expected, 1e-8 * std::max(1.0, expected))
        << to_string(rec.layer);
    EXPECT_NEAR(measured, expected, 1e-8 * std::max(1.0, expected)) << to_string(rec.layer);
  }
}

TEST(CompressModel, RefinementLowersFinalError) {
  const BlockDims dims{16, 4, 32, 8};
  const ToyModel m = make_model(dims, 4, 11);
  const CalibrationSet c = generate_calibration(dims, 32, 12);
  const Matrix eval = generate_calibration(dims, 16, 13).inputs;
  RunConfig cfg = plain(0.5);
  const CompressResult off = compress_model(m, c, cfg);
  cfg.refine_enabled = true;
  cfg.refine.base_lr = 1e-3;
  cfg.refine.epochs = 10;
  cfg.refine.batch_size = 8;
  const CompressResult on = compress_model(m, c, cfg);
  const Matrix ref = model_forward(m, eval);
  const double mse_off = (model_forward(off.model, eval) - ref).squaredNorm();
  const double mse_on = (model_forward(on.model, eval) - ref).squaredNorm();
  EXPECT_LE(mse_on, mse_off);
  for (const BlockRecord& b : on.report.blocks) {
    EXPECT_TRUE(b.refined);
    EXPECT_EQ(b.loss_trace.size(), 10u);
    EXPECT_LT(b.refine_final_loss, b.refine_initial_loss);
  }
}

TEST(CompressModel, BlockEntrySourceAndDeterminism) {
  const ToyModel m = make_model(kDims, 2, 14);
  const CalibrationSet c = generate_calibration(kDims, 12, 15);
  RunConfig cfg = plain(0.5);
  cfg.shift_source = ShiftSource::kBlockEntry;
  const CompressResult a = compress_model(m, c, cfg);
  const CompressResult b = compress_model(m, c, cfg);
  EXPECT_EQ(encode_container(model_tensors(a.model)), encode_container(model_tensors(b.model)));
  cfg.shift_source = ShiftSource::kInPlace;
  const CompressResult d = compress_model(m, c, cfg);
  EXPECT_NE(encode_container(model_tensors(a.model)), encode_container(model_tensors(d.model)));
}

TEST(CompressModel, ConfigErrors) {
  const ToyModel m = make_model(kDims, 1, 1);
  const CalibrationSet c = generate_calibration(kDims, 4, 1);
  EXPECT_TRUE(throws_code([&] { (void)compress_model(m, c, plain(0.0)); },
                          ErrorCode::kInvalidConfig));
  EXPECT_TRUE(throws_code([&] { (void)compress_model(m, c, plain(1.5)); },
                          ErrorCode::kInvalidConfig));
  const CalibrationSet wrong = generate_calibration({12, 2, 16, 4}, 4, 1);
  EXPECT_TRUE(throws_code([&] { (void)compress_model(m, wrong, plain(0.5)); },
                          ErrorCode::kDimensionMismatch));
}

TEST(CompressModel, RankLimitedShiftNeedsRegularization) {
  // Two heads at k = 2 leave X' of o_proj with rank 4 < d_model = 8.
  const BlockDims dims{8, 2, 16, 4};
  const ToyModel m = make_model(dims, 1, 3);
  const CalibrationSet c = generate_calibration(dims, 16, 4);
  try {
    (void)compress_model(m, c, plain(0.5));
    FAIL() << "expected a singular covariance";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularCovariance);
    EXPECT_NE(std::string(e.what()).find("block 1 o_proj"), std::string::npos) << e.what();
  }
  RunConfig cfg = plain(0.5);
  cfg.solve.singular = SingularPolicy::kTikhonov;
  const CompressResult r = compress_model(m, c, cfg);
  EXPECT_TRUE(model_forward(r.model, c.inputs).allFinite());
}

TEST(ShiftSourceNames, RoundTrip) {
  for (ShiftSource s : {ShiftSource::kInPlace, ShiftSource::kBlockEntry}) {
    EXPECT_EQ(parse_shift_source(to_string(s)), s);
  }
  EXPECT_TRUE(throws_code([] { (void)parse_shift_source("entry"); }, ErrorCode::kInvalidConfig));
}

// ---------------------------------------------------------------- containers

TEST(Container, ModelRoundTripIsBitIdentical) {
  const ToyModel m = make_model(kDims, 2, 16);
  const CalibrationSet c = generate_calibration(kDims, 8, 17);
  const ToyModel comp = compress_model(m, c, plain(0.5)).model;
  for (const ToyModel* model : {&m, &comp}) {
    const fs::path p = scratch("model.aasv");
    save_model(p, *model);
    const ToyModel back = load_model(p);
    EXPECT_EQ(back.dims, model->dims);
    EXPECT_EQ(back.embed_seed, model->embed_seed);
    EXPECT_EQ(encode_container(model_tensors(back)), read_file(p));
    EXPECT_EQ(encode_container(model_tensors(back)), encode_container(model_tensors(*model)));
  }
  const ToyModel back = [&] {
    save_model(scratch("c.aasv"), comp);
    return load_model(scratch("c.aasv"));
  }();
  EXPECT_TRUE(back.blocks[1].at(LayerId::kUp).is_factorized());
  EXPECT_EQ(back.blocks[1].at(LayerId::kUp).factors().objective_used, Objective::kAnchored);
}

TEST(Container, HeaderAndLayout) {
  Matrix v(2, 1);
  v << 1.5, -2.0;
  const std::string bytes = encode_container({{"ab", v}});
  ASSERT_EQ(bytes.size(), 4u + 4u + 4u + 2u + 8u + 16u);
  EXPECT_EQ(bytes.substr(0, 4), "AASV");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(bytes.substr(12, 2), "ab");
  const auto back = decode_container(bytes);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].value, v);
}

TEST(Container, TruncationIsCorrupt) {
  const std::string bytes = encode_container(model_tensors(make_model(kDims, 1, 1)));
  for (size_t cut : {size_t{3}, size_t{7}, size_t{13}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_TRUE(throws_code([&] { (void)decode_container(bytes.substr(0, cut)); },
                            ErrorCode::kCorruptContainer))
        << cut;
  }
  const fs::path p = scratch("trunc.aasv");
  write_file_atomic(p, bytes.substr(0, bytes.size() - 5));
  EXPECT_TRUE(throws_code([&] { (void)load_model(p); }, ErrorCode::kCorruptContainer));
}

TEST(Container, BadTagsAndContents) {
  std::string bytes = encode_container({{"x", Matrix::Ones(1, 1)}});
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_TRUE(throws_code([&] { (void)decode_container(bad_magic); }, ErrorCode::kCorruptContainer));
  std::string bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_TRUE(throws_code([&] { (void)decode_container(bad_version); }, ErrorCode::kCorruptContainer));
  EXPECT_TRUE(throws_code(
      [] { (void)decode_container(encode_container({{"x", Matrix::Ones(1, 1)}, {"x", Matrix::Ones(1, 1)}})); },
      ErrorCode::kCorruptContainer));
  auto tensors = model_tensors(make_model(kDims, 1, 1));
  tensors.push_back({"block0.extra", Matrix::Ones(1, 1)});
  EXPECT_TRUE(throws_code([&] { (void)model_from_tensors(tensors); }, ErrorCode::kCorruptContainer));
  tensors.pop_back();
  tensors.erase(tensors.begin() + 1);
  EXPECT_TRUE(throws_code([&] { (void)model_from_tensors(tensors); }, ErrorCode::kCorruptContainer));
}

TEST(Container, MissingFileIsIo) {
  EXPECT_TRUE(throws_code([] { (void)load_model(scratch("does_not_exist.aasv")); }, ErrorCode::kIo));
}

TEST(Container, CovarianceRoundTrip) {
  const CovarianceSet cov = stats(oracle::random_matrix(5, 9, 1), oracle::random_matrix(5, 9, 2));
  const fs::path p = scratch("cov.aasv");
  save_covariance(p, cov);
  const CovarianceSet back = load_covariance(p);
  EXPECT_EQ(back.cross, cov.cross);
  EXPECT_EQ(back.shifted_gram, cov.shifted_gram);
  EXPECT_EQ(back.original_gram, cov.original_gram);
  EXPECT_EQ(back.columns, 9);
  auto tensors = covariance_tensors(cov);
  tensors.pop_back();
  EXPECT_TRUE(throws_code([&] { (void)covariance_from_tensors(tensors); }, ErrorCode::kCorruptContainer));
}

}  // namespace
}  // namespace aasvd
