// bench/kernels_bench.cpp

// Copyright 2026  The xmodal Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Serial reference loops against the OpenMP kernels.

#include <benchmark/benchmark.h>

#include <vector>

#include "xmodal/kernels.hpp"
#include "xmodal/numerics.hpp"

namespace {

using namespace xmodal;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  SeededRng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&)>
void BM_gemm_nt(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 768, 1), b = random_matrix(n, 768, 2);
  Matrix c;
  for (auto _ : state) {
    Gemm(a, b, c);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * 768));
}

template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&)>
void BM_gemm_nn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 768, 1), b = random_matrix(768, 768, 2);
  Matrix c;
  for (auto _ : state) {
    Gemm(a, b, c);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 768 * 768));
}

template <void (*Score)(const Matrix&, std::span<const double>, std::span<double>)>
void BM_score_rows(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix rows = random_matrix(n, 768, 3);
  const Matrix query = random_matrix(1, 768, 4);
  std::vector<double> scores(n);
  for (auto _ : state) {
    Score(rows, query.row(0), scores);
    benchmark::DoNotOptimize(scores.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 768));
}

template <void (*Adam)(std::span<double>, std::span<const double>, std::span<double>,
                       std::span<double>, const kernels::AdamCoefficients&)>
void BM_adam(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Matrix param = random_matrix(1, n, 5);
  const Matrix grad = random_matrix(1, n, 6);
  std::vector<double> m(n, 0.0), v(n, 0.0);
  const kernels::AdamCoefficients coef{1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001};
  for (auto _ : state) {
    Adam(param.values(), grad.values(), m, v, coef);
    benchmark::DoNotOptimize(param.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

BENCHMARK(BM_gemm_nt<kernels::serial::gemm_nt>)->Name("gemm_nt/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_nt<kernels::gemm_nt>)->Name("gemm_nt/openmp")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_nn<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(16)->Arg(64);
BENCHMARK(BM_gemm_nn<kernels::gemm_nn>)->Name("gemm_nn/openmp")->Arg(16)->Arg(64);
BENCHMARK(BM_score_rows<kernels::serial::score_rows>)->Name("score_rows/serial")->Arg(1000)->Arg(20000);
BENCHMARK(BM_score_rows<kernels::score_rows>)->Name("score_rows/openmp")->Arg(1000)->Arg(20000);
BENCHMARK(BM_adam<kernels::serial::adam_update>)->Name("adam/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_adam<kernels::adam_update>)->Name("adam/openmp")->Arg(1 << 16)->Arg(1 << 20);

}  // namespace

BENCHMARK_MAIN();
