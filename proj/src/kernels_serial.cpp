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

#include "atfuse/kernels.hpp"

// Reference kernels: direct loops, one output element at a time.
namespace atfuse::kernels::serial {

namespace {

inline bool inside(std::ptrdiff_t v, std::size_t n) {
  return v >= 0 && v < static_cast<std::ptrdiff_t>(n);
}

}  // namespace

void conv3x3_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                     std::span<const double> bias, std::span<double> y) {
  const std::size_t hw = s.height * s.width;
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t co = 0; co < s.c_out; ++co) {
      for (std::size_t i = 0; i < s.height; ++i) {
        for (std::size_t j = 0; j < s.width; ++j) {
          double acc = bias[co];
          for (std::size_t ci = 0; ci < s.c_in; ++ci) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const auto yi = static_cast<std::ptrdiff_t>(i) + ky - 1;
                const auto xj = static_cast<std::ptrdiff_t>(j) + kx - 1;
                if (!inside(yi, s.height) || !inside(xj, s.width)) continue;
                acc += w[((co * s.c_in + ci) * 3 + ky) * 3 + kx] *
                       x[(n * s.c_in + ci) * hw + yi * s.width + xj];
              }
            }
          }
          y[(n * s.c_out + co) * hw + i * s.width + j] = acc;
        }
      }
    }
  }
}

void conv3x3_backward_input(const ConvShape& s, std::span<const double> dy,
                            std::span<const double> w, std::span<double> dx) {
  const std::size_t hw = s.height * s.width;
  for (std::size_t n = 0; n < s.batch; ++n) {
    for (std::size_t ci = 0; ci < s.c_in; ++ci) {
      for (std::size_t p = 0; p < s.height; ++p) {
        for (std::size_t q = 0; q < s.width; ++q) {
          double acc = 0.0;
          for (std::size_t co = 0; co < s.c_out; ++co) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const auto yi = static_cast<std::ptrdiff_t>(p) - ky + 1;
                const auto xj = static_cast<std::ptrdiff_t>(q) - kx + 1;
                if (!inside(yi, s.height) || !inside(xj, s.width)) continue;
                acc += w[((co * s.c_in + ci) * 3 + ky) * 3 + kx] *
                       dy[(n * s.c_out + co) * hw + yi * s.width + xj];
              }
            }
          }
          dx[(n * s.c_in + ci) * hw + p * s.width + q] += acc;
        }
      }
    }
  }
}

void conv3x3_backward_weight(const ConvShape& s, std::span<const double> x,
                             std::span<const double> dy, std::span<double> dw,
                             std::span<double> dbias) {
  const std::size_t hw = s.height * s.width;
  for (std::size_t co = 0; co < s.c_out; ++co) {
    double db = 0.0;
    for (std::size_t n = 0; n < s.batch; ++n) {
      for (std::size_t k = 0; k < hw; ++k) db += dy[(n * s.c_out + co) * hw + k];
    }
    dbias[co] += db;
    for (std::size_t ci = 0; ci < s.c_in; ++ci) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          double acc = 0.0;
          for (std::size_t n = 0; n < s.batch; ++n) {
            for (std::size_t i = 0; i < s.height; ++i) {
              for (std::size_t j = 0; j < s.width; ++j) {
                const auto yi = static_cast<std::ptrdiff_t>(i) + ky - 1;
                const auto xj = static_cast<std::ptrdiff_t>(j) + kx - 1;
                if (!inside(yi, s.height) || !inside(xj, s.width)) continue;
                acc += dy[(n * s.c_out + co) * hw + i * s.width + j] *
                       x[(n * s.c_in + ci) * hw + yi * s.width + xj];
              }
            }
          }
          dw[((co * s.c_in + ci) * 3 + ky) * 3 + kx] += acc;
        }
      }
    }
  }
}

void matmul(const MatmulShape& s, std::span<const double> a, std::span<const double> b,
            std::span<double> c) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s.k; ++k) acc += a[i * s.k + k] * b[k * s.n + j];
      c[i * s.n + j] = acc;
    }
  }
}

void matmul_at_b(const MatmulShape& s, std::span<const double> a, std::span<const double> dc,
                 std::span<double> db) {
  for (std::size_t k = 0; k < s.k; ++k) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s.m; ++i) acc += a[i * s.k + k] * dc[i * s.n + j];
      db[k * s.n + j] += acc;
    }
  }
}

void matmul_a_bt(const MatmulShape& s, std::span<const double> dc, std::span<const double> b,
                 std::span<double> da) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t k = 0; k < s.k; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) acc += dc[i * s.n + j] * b[k * s.n + j];
      da[i * s.k + k] += acc;
    }
  }
}

}  // namespace atfuse::kernels::serial
