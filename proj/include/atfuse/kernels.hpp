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

#pragma once

#include <cstddef>
#include <span>

// Hot loops of the tensor core. Each kernel exists twice: a plain serial
// reference and an OpenMP version. Both accumulate every output element in
// the same order, so their results are bitwise identical and independent of
// the thread count.
namespace atfuse::kernels {

struct ConvShape {
  std::size_t batch;
  std::size_t c_in;
  std::size_t c_out;
  std::size_t height;
  std::size_t width;
};

// Row-major matrices; c = a[m x k] * b[k x n] (overwritten).
struct MatmulShape {
  std::size_t m;
  std::size_t k;
  std::size_t n;
};

#define ATFUSE_KERNEL_DECLS                                                                       \
  void conv3x3_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w, \
                       std::span<const double> bias, std::span<double> y);                      \
  void conv3x3_backward_input(const ConvShape& s, std::span<const double> dy,                   \
                              std::span<const double> w, std::span<double> dx);                 \
  void conv3x3_backward_weight(const ConvShape& s, std::span<const double> x,                   \
                               std::span<const double> dy, std::span<double> dw,                \
                               std::span<double> dbias);                                        \
  void matmul(const MatmulShape& s, std::span<const double> a, std::span<const double> b,       \
              std::span<double> c);                                                             \
  void matmul_at_b(const MatmulShape& s, std::span<const double> a, std::span<const double> dc, \
                   std::span<double> db);                                                       \
  void matmul_a_bt(const MatmulShape& s, std::span<const double> dc, std::span<const double> b, \
                   std::span<double> da);

// conv3x3_*: zero padding 1, stride 1. x is [batch, c_in, H, W], w is
// [c_out, c_in, 3, 3], y is [batch, c_out, H, W]. Backward kernels accumulate
// into dx / dw / dbias. matmul_at_b accumulates a^T * dc into db [k x n];
// matmul_a_bt accumulates dc * b^T into da [m x k].
namespace serial {
ATFUSE_KERNEL_DECLS
}

namespace omp {
ATFUSE_KERNEL_DECLS
}

#undef ATFUSE_KERNEL_DECLS

// Worker count used by the OpenMP kernels. Defaults to the ATFUSE_THREADS
// environment variable when set, else the OpenMP default.
int num_threads();
void set_num_threads(int n);

}  // namespace atfuse::kernels
