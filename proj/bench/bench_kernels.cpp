// Copyright 2026 The ATFuse Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference vs OpenMP kernels on model-sized shapes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "atfuse/kernels.hpp"

namespace k = atfuse::kernels;

namespace {

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

k::ConvShape conv_shape(const benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  return {16, 16, 16, side, side};
}

template <bool Parallel>
void BM_Conv3x3Forward(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto x = filled(s.batch * s.c_in * s.height * s.width, 1);
  const auto w = filled(s.c_out * s.c_in * 9, 2);
  const auto b = filled(s.c_out, 3);
  std::vector<double> y(s.batch * s.c_out * s.height * s.width);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::conv3x3_forward(s, x, w, b, y);
    } else {
      k::serial::conv3x3_forward(s, x, w, b, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * s.batch * s.c_out * s.height * s.width);
}

template <bool Parallel>
void BM_Conv3x3BackwardWeight(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto x = filled(s.batch * s.c_in * s.height * s.width, 4);
  const auto dy = filled(s.batch * s.c_out * s.height * s.width, 5);
  std::vector<double> dw(s.c_out * s.c_in * 9), db(s.c_out);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::conv3x3_backward_weight(s, x, dy, dw, db);
    } else {
      k::serial::conv3x3_backward_weight(s, x, dy, dw, db);
    }
    benchmark::DoNotOptimize(dw.data());
  }
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const k::MatmulShape s{n, n, n};
  const auto a = filled(n * n, 6), b = filled(n * n, 7);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::matmul(s, a, b, c);
    } else {
      k::serial::matmul(s, a, b, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

template <bool Parallel>
void BM_MatmulAtB(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const k::MatmulShape s{n, n, n};
  const auto a = filled(n * n, 8), dc = filled(n * n, 9);
  std::vector<double> db(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::matmul_at_b(s, a, dc, db);
    } else {
      k::serial::matmul_at_b(s, a, dc, db);
    }
    benchmark::DoNotOptimize(db.data());
  }
}

}  // namespace

BENCHMARK(BM_Conv3x3Forward<false>)->Name("conv3x3_forward/serial")->Arg(32)->Arg(64);
BENCHMARK(BM_Conv3x3Forward<true>)->Name("conv3x3_forward/omp")->Arg(32)->Arg(64)->UseRealTime();
BENCHMARK(BM_Conv3x3BackwardWeight<false>)->Name("conv3x3_backward_weight/serial")->Arg(32);
BENCHMARK(BM_Conv3x3BackwardWeight<true>)->Name("conv3x3_backward_weight/omp")->Arg(32)->UseRealTime();
BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/omp")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_MatmulAtB<false>)->Name("matmul_at_b/serial")->Arg(256);
BENCHMARK(BM_MatmulAtB<true>)->Name("matmul_at_b/omp")->Arg(256)->UseRealTime();

BENCHMARK_MAIN();
