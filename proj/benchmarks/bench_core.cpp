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


#include <benchmark/benchmark.h>

#include <random>

#include "aasvd/covariance.hpp"
#include "aasvd/layerwise.hpp"
#include "aasvd/linalg.hpp"
#include "aasvd/pipeline.hpp"
#include "aasvd/toyformer.hpp"

namespace aasvd {
namespace {

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

void BM_TruncatedSvd(benchmark::State& state, linalg::SvdRoute route) {
  const Index n = state.range(0);
  const Matrix m = gaussian(n, n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(linalg::truncated_svd(m, n / 4, route));
  state.SetComplexityN(n);
}
BENCHMARK_CAPTURE(BM_TruncatedSvd, gram, linalg::SvdRoute::kGram)->RangeMultiplier(2)->Range(16, 128);
BENCHMARK_CAPTURE(BM_TruncatedSvd, jacobi, linalg::SvdRoute::kJacobi)->RangeMultiplier(2)->Range(16, 128);

void BM_FactorSpd(benchmark::State& state, linalg::FactorMethod method) {
  const Index n = state.range(0);
  const Matrix z = gaussian(n, 2 * n, 2);
  const Matrix s = z * z.transpose();
  for (auto _ : state) benchmark::DoNotOptimize(linalg::factor_spd(s, method));
}
BENCHMARK_CAPTURE(BM_FactorSpd, cholesky, linalg::FactorMethod::kCholesky)->Range(16, 128);
BENCHMARK_CAPTURE(BM_FactorSpd, evd, linalg::FactorMethod::kEvd)->Range(16, 128);

void BM_CompressLayer(benchmark::State& state) {
  const Index n = state.range(0);
  const Matrix w = gaussian(n, n, 3);
  const Matrix x = gaussian(n, 8 * n, 4);
  const Matrix xs = x + 0.1 * gaussian(n, 8 * n, 5);
  CovarianceAccumulator acc(n);
  acc.accumulate(x, xs);
  const CovarianceSet cov = acc.finalize();
  for (auto _ : state) benchmark::DoNotOptimize(compress_layer(w, cov, n / 4));
}
BENCHMARK(BM_CompressLayer)->RangeMultiplier(2)->Range(16, 128);

void BM_CovarianceAccumulate(benchmark::State& state) {
  const Index n = state.range(0);
  const Matrix a = gaussian(n, 512, 6);
  const Matrix b = gaussian(n, 512, 7);
  CovarianceAccumulator acc(n);
  for (auto _ : state) acc.accumulate(a, b);
  state.SetItemsProcessed(state.iterations() * 512);
}
BENCHMARK(BM_CovarianceAccumulate)->RangeMultiplier(2)->Range(16, 128);

void BM_BlockForward(benchmark::State& state) {
  const BlockDims dims{32, 4, 64, 16};
  const BlockParams p = init_block(dims, 8);
  const Matrix x = generate_calibration(dims, state.range(0), 9).inputs;
  for (auto _ : state) benchmark::DoNotOptimize(block_forward(p, dims, x));
  state.SetItemsProcessed(state.iterations() * x.cols());
}
BENCHMARK(BM_BlockForward)->Arg(8)->Arg(32)->Arg(128);

void BM_BlockBackward(benchmark::State& state) {
  const BlockDims dims{32, 4, 64, 16};
  const BlockParams p = init_block(dims, 8);
  const Matrix x = generate_calibration(dims, state.range(0), 9).inputs;
  const ForwardResult fwd = block_forward(p, dims, x);
  const Matrix dy = gaussian(x.rows(), x.cols(), 10);
  for (auto _ : state) benchmark::DoNotOptimize(block_backward(p, fwd.cache, dy));
  state.SetItemsProcessed(state.iterations() * x.cols());
}
BENCHMARK(BM_BlockBackward)->Arg(8)->Arg(32)->Arg(128);

void BM_CompressModel(benchmark::State& state) {
  const BlockDims dims{32, 4, 64, 16};
  const ToyModel model = make_model(dims, 4, 0);
  const CalibrationSet calib = generate_calibration(dims, 64, 1);
  RunConfig cfg;
  cfg.compare_objectives = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(compress_model(model, calib, cfg));
}
BENCHMARK(BM_CompressModel)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace aasvd

BENCHMARK_MAIN();
