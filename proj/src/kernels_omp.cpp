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

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <vector>

#include "atfuse/kernels.hpp"

namespace atfuse::kernels {

namespace {

int& thread_setting() {
  static int threads = [] {
    if (const char* env = std::getenv("ATFUSE_THREADS")) {
      const int n = std::atoi(env);
      if (n > 0) return n;
    }
    return omp_get_max_threads();
  }();
  return threads;
}

// Output rows/cols [lo, hi) whose tap at offset (k - 1) stays inside [0, n).
struct Range {
  std::size_t lo;
  std::size_t hi;
};

inline Range forward_range(int k, std::size_t n) {
  return {k == 0 ? 1u : 0u, k == 2 ? n - 1 : n};
}

// Input positions p receiving from output p - k + 1.
inline Range backward_range(int k, std::size_t n) {
  return {k == 2 ? 1u : 0u, k == 0 ? n - 1 : n};
}

}  // namespace

int num_threads() { return thread_setting(); }

void set_num_threads(int n) { thread_setting() = std::max(1, n); }

namespace omp {

void conv3x3_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                     std::span<const double> bias, std::span<double> y) {
  const std::size_t hw = s.height * s.width;
  const auto planes = static_cast<std::ptrdiff_t>(s.batch * s.c_out);
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t plane = 0; plane < planes; ++plane) {
    const std::size_t n = plane / s.c_out;
    const std::size_t co = plane % s.c_out;
    double* out = y.data() + plane * hw;
    std::fill(out, out + hw, bias[co]);
    for (std::size_t ci = 0; ci < s.c_in; ++ci) {
      const double* in = x.data() + (n * s.c_in + ci) * hw;
      for (int ky = 0; ky < 3; ++ky) {
        const Range rows = forward_range(ky, s.height);
        for (int kx = 0; kx < 3; ++kx) {
          const Range cols = forward_range(kx, s.width);
          const double wv = w[((co * s.c_in + ci) * 3 + ky) * 3 + kx];
          for (std::size_t i = rows.lo; i < rows.hi; ++i) {
            double* orow = out + i * s.width;
            const double* irow = in + (i + ky - 1) * s.width + (kx - 1);
            for (std::size_t j = cols.lo; j < cols.hi; ++j) orow[j] += wv * irow[j];
          }
        }
      }
    }
  }
}

void conv3x3_backward_input(const ConvShape& s, std::span<const double> dy,
                            std::span<const double> w, std::span<double> dx) {
  const std::size_t hw = s.height * s.width;
  const auto planes = static_cast<std::ptrdiff_t>(s.batch * s.c_in);
#pragma omp parallel num_threads(num_threads())
  {
    std::vector<double> local(hw);
#pragma omp for schedule(static)
    for (std::ptrdiff_t plane = 0; plane < planes; ++plane) {
      const std::size_t n = plane / s.c_in;
      const std::size_t ci = plane % s.c_in;
      std::fill(local.begin(), local.end(), 0.0);
      for (std::size_t co = 0; co < s.c_out; ++co) {
        const double* g = dy.data() + (n * s.c_out + co) * hw;
        for (int ky = 0; ky < 3; ++ky) {
          const Range rows = backward_range(ky, s.height);
          for (int kx = 0; kx < 3; ++kx) {
            const Range cols = backward_range(kx, s.width);
            const double wv = w[((co * s.c_in + ci) * 3 + ky) * 3 + kx];
            for (std::size_t p = rows.lo; p < rows.hi; ++p) {
              double* lrow = local.data() + p * s.width;
              const double* grow = g + (p + 1 - ky) * s.width + (1 - kx);
              for (std::size_t q = cols.lo; q < cols.hi; ++q) lrow[q] += wv * grow[q];
            }
          }
        }
      }
      double* out = dx.data() + plane * hw;
      for (std::size_t k = 0; k < hw; ++k) out[k] += local[k];
    }
  }
}

void conv3x3_backward_weight(const ConvShape& s, std::span<const double> x,
                             std::span<const double> dy, std::span<double> dw,
                             std::span<double> dbias) {
  const std::size_t hw = s.height * s.width;
  const auto filters = static_cast<std::ptrdiff_t>(s.c_out * s.c_in);
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t co = 0; co < static_cast<std::ptrdiff_t>(s.c_out); ++co) {
    double db = 0.0;
    for (std::size_t n = 0; n < s.batch; ++n) {
      const double* g = dy.data() + (n * s.c_out + co) * hw;
      for (std::size_t k = 0; k < hw; ++k) db += g[k];
    }
    dbias[co] += db;
  }
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t f = 0; f < filters; ++f) {
    const std::size_t co = f / s.c_in;
    const std::size_t ci = f % s.c_in;
    for (int ky = 0; ky < 3; ++ky) {
      const Range rows = forward_range(ky, s.height);
      for (int kx = 0; kx < 3; ++kx) {
        const Range cols = forward_range(kx, s.width);
        double acc = 0.0;
        for (std::size_t n = 0; n < s.batch; ++n) {
          const double* g = dy.data() + (n * s.c_out + co) * hw;
          const double* in = x.data() + (n * s.c_in + ci) * hw;
          for (std::size_t i = rows.lo; i < rows.hi; ++i) {
            const double* grow = g + i * s.width;
            const double* irow = in + (i + ky - 1) * s.width + (kx - 1);
            for (std::size_t j = cols.lo; j < cols.hi; ++j) acc += grow[j] * irow[j];
          }
        }
        dw[f * 9 + ky * 3 + kx] += acc;
      }
    }
  }
}

void matmul(const MatmulShape& s, std::span<const double> a, std::span<const double> b,
            std::span<double> c) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(s.m); ++i) {
    double* crow = c.data() + i * s.n;
    std::fill(crow, crow + s.n, 0.0);
    for (std::size_t k = 0; k < s.k; ++k) {
      const double av = a[i * s.k + k];
      const double* brow = b.data() + k * s.n;
      for (std::size_t j = 0; j < s.n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_at_b(const MatmulShape& s, std::span<const double> a, std::span<const double> dc,
                 std::span<double> db) {
#pragma omp parallel num_threads(num_threads())
  {
    std::vector<double> local(s.n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(s.k); ++k) {
      std::fill(local.begin(), local.end(), 0.0);
      for (std::size_t i = 0; i < s.m; ++i) {
        const double av = a[i * s.k + k];
        const double* grow = dc.data() + i * s.n;
        for (std::size_t j = 0; j < s.n; ++j) local[j] += av * grow[j];
      }
      double* out = db.data() + k * s.n;
      for (std::size_t j = 0; j < s.n; ++j) out[j] += local[j];
    }
  }
}

void matmul_a_bt(const MatmulShape& s, std::span<const double> dc, std::span<const double> b,
                 std::span<double> da) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(s.m); ++i) {
    const double* grow = dc.data() + i * s.n;
    for (std::size_t k = 0; k < s.k; ++k) {
      const double* brow = b.data() + k * s.n;
      double acc = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) acc += grow[j] * brow[j];
      da[i * s.k + k] += acc;
    }
  }
}

}  // namespace omp
}  // namespace atfuse::kernels
