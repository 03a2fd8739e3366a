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

#include "atfuse/ops.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <string>

#include "atfuse/error.hpp"
#include "atfuse/kernels.hpp"

namespace atfuse::ops {

using detail::Node;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

// Grad buffer of input i if it participates in differentiation, else null.
std::vector<double>* grad_of(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return &in.grad;
}

const std::vector<double>& data_of(const Node& self, std::size_t i) { return self.inputs[i]->data; }

template <typename F>
Tensor unary(const char* op, const Tensor& x, F&& fwd,
             std::function<void(Node&)> backward) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return Tensor::make_result(op, x.shape(), std::move(out), {x}, std::move(backward));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = data_of(self, 0);
    const auto& bv = data_of(self, 1);
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  return unary("scale", x, [s](double v) { return v * s; }, [s](Node& self) {
    auto* g = grad_of(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary("add_scalar", x, [s](double v) { return v + s; }, [](Node& self) {
    auto* g = grad_of(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor abs(const Tensor& x) {
  // Exact zeros come from structurally vanishing inputs (mirrored borders)
  // and keep slope 0 under any perturbation, so only nonzero values count.
  const double inf = std::numeric_limits<double>::infinity();
  if (x.requires_grad()) {
    for (double v : x.data()) {
      BranchProbe::record(v > 0 ? 0 : (v < 0 ? 1 : 2), v == 0 ? inf : std::fabs(v));
    }
  }
  return unary("abs", x, [](double v) { return std::fabs(v); }, [](Node& self) {
    const auto& xv = data_of(self, 0);
    auto* g = grad_of(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double sign = xv[i] > 0 ? 1.0 : (xv[i] < 0 ? -1.0 : 0.0);
      (*g)[i] += self.grad[i] * sign;
    }
  });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  require_same_shape("maximum", a, b);
  std::vector<double> out(a.numel());
  const bool tracked = a.requires_grad() || b.requires_grad();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool first = a[i] >= b[i];
    if (tracked) BranchProbe::record(first ? 0 : 1, std::fabs(a[i] - b[i]));
    out[i] = first ? a[i] : b[i];
  }
  return Tensor::make_result("maximum", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = data_of(self, 0);
    const auto& bv = data_of(self, 1);
    auto* ga = grad_of(self, 0);
    auto* gb = grad_of(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (av[i] >= bv[i]) {
        if (ga) (*ga)[i] += self.grad[i];
      } else if (gb) {
        (*gb)[i] += self.grad[i];
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result("sum", {1}, {acc}, {x}, [](Node& self) {
    auto* g = grad_of(self, 0);
    for (auto& v : *g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor abs_sum(const Tensor& x) { return sum(abs(x)); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    auto* g = grad_of(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const kernels::MatmulShape s{a.dim(0), a.dim(1), b.dim(1)};
  std::vector<double> out(s.m * s.n);
  kernels::omp::matmul(s, a.data(), b.data(), out);
  return Tensor::make_result("matmul", {s.m, s.n}, std::move(out), {a, b}, [s](Node& self) {
    if (auto* g = grad_of(self, 0)) kernels::omp::matmul_a_bt(s, self.grad, data_of(self, 1), *g);
    if (auto* g = grad_of(self, 1)) kernels::omp::matmul_at_b(s, data_of(self, 0), self.grad, *g);
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return Tensor::make_result("transpose", {c, r}, std::move(out), {a}, [r, c](Node& self) {
    auto* g = grad_of(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_row_bias", x, 2);
  if (bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) + " does not fit " +
                         shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] + bias[j];
  return Tensor::make_result("add_row_bias", x.shape(), std::move(out), {x, bias},
                             [n, d](Node& self) {
                               if (auto* g = grad_of(self, 0)) {
                                 for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
                               }
                               if (auto* g = grad_of(self, 1)) {
                                 for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t j = 0; j < d; ++j)
                                     (*g)[j] += self.grad[i * d + j];
                               }
                             });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_row_bias(matmul(x, w), b);
}

Tensor softmax_rows(const Tensor& x) {
  require_rank("softmax_rows", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.data().data() + i * c;
    const double peak = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - peak);
      total += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return Tensor::make_result("softmax_rows", x.shape(), std::move(out), {x}, [r, c, y](Node& self) {
    auto* g = grad_of(self, 0);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * (*y)[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        (*g)[i * c + j] += (*y)[i * c + j] * (self.grad[i * c + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  require_rank("layer_norm", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gain.numel() != d || shift.numel() != d) {
    throw DimensionError("layer_norm: affine parameters must have " + std::to_string(d) +
                         " entries");
  }
  std::vector<double> out(n * d);
  auto xhat = std::make_shared<std::vector<double>>(n * d);
  auto inv = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[i * d + j] - mu) * (x[i * d + j] - mu);
    var /= static_cast<double>(d);
    (*inv)[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (x[i * d + j] - mu) * (*inv)[i];
      (*xhat)[i * d + j] = h;
      out[i * d + j] = gain[j] * h + shift[j];
    }
  }
  return Tensor::make_result(
      "layer_norm", x.shape(), std::move(out), {x, gain, shift}, [n, d, xhat, inv](Node& self) {
        const auto& gv = data_of(self, 1);
        if (auto* g = grad_of(self, 0)) {
          std::vector<double> dh(d);
          for (std::size_t i = 0; i < n; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dh[j] = self.grad[i * d + j] * gv[j];
              s1 += dh[j];
              s2 += dh[j] * (*xhat)[i * d + j];
            }
            const double k = (*inv)[i] / static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              (*g)[i * d + j] +=
                  k * (static_cast<double>(d) * dh[j] - s1 - (*xhat)[i * d + j] * s2);
            }
          }
        }
        if (auto* g = grad_of(self, 1)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[i * d + j] * (*xhat)[i * d + j];
        }
        if (auto* g = grad_of(self, 2)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[i * d + j];
        }
      });
}

Tensor batch_norm_2d(const Tensor& x, const Tensor& gain, const Tensor& shift,
                     BatchNormStats& stats, NormMode mode) {
  require_rank("batch_norm_2d", x, 4);
  const std::size_t batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gain.numel() != c || shift.numel() != c || stats.mean.size() != c ||
      stats.var.size() != c) {
    throw DimensionError("batch_norm_2d: parameters do not match " + std::to_string(c) +
                         " channels");
  }
  const double m = static_cast<double>(batch * hw);
  const bool use_batch = mode != NormMode::kEval;
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv = std::make_shared<std::vector<double>>(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (use_batch) {
      mu = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t k = 0; k < hw; ++k) mu += x[(n * c + ch) * hw + k];
      mu /= m;
      var = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t k = 0; k < hw; ++k) {
          const double e = x[(n * c + ch) * hw + k] - mu;
          var += e * e;
        }
      }
      var /= m;
      if (mode == NormMode::kTrain) {
        const double unbiased = m > 1 ? var * m / (m - 1) : var;
        stats.mean[ch] = (1 - stats.momentum) * stats.mean[ch] + stats.momentum * mu;
        stats.var[ch] = (1 - stats.momentum) * stats.var[ch] + stats.momentum * unbiased;
      }
    } else {
      mu = stats.mean[ch];
      var = stats.var[ch];
    }
    (*inv)[ch] = 1.0 / std::sqrt(var + stats.eps);
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t k = 0; k < hw; ++k) {
        const std::size_t idx = (n * c + ch) * hw + k;
        const double h = (x[idx] - mu) * (*inv)[ch];
        (*xhat)[idx] = h;
        out[idx] = gain[ch] * h + shift[ch];
      }
    }
  }
  return Tensor::make_result(
      "batch_norm_2d", x.shape(), std::move(out), {x, gain, shift},
      [batch, c, hw, m, use_batch, xhat, inv](Node& self) {
        const auto& gv = data_of(self, 1);
        if (auto* g = grad_of(self, 0)) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t n = 0; n < batch; ++n) {
              for (std::size_t k = 0; k < hw; ++k) {
                const std::size_t idx = (n * c + ch) * hw + k;
                const double dh = self.grad[idx] * gv[ch];
                s1 += dh;
                s2 += dh * (*xhat)[idx];
              }
            }
            for (std::size_t n = 0; n < batch; ++n) {
              for (std::size_t k = 0; k < hw; ++k) {
                const std::size_t idx = (n * c + ch) * hw + k;
                const double dh = self.grad[idx] * gv[ch];
                (*g)[idx] += use_batch ? (*inv)[ch] / m * (m * dh - s1 - (*xhat)[idx] * s2)
                                       : (*inv)[ch] * dh;
              }
            }
          }
        }
        auto* gg = grad_of(self, 1);
        auto* gs = grad_of(self, 2);
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t k = 0; k < hw; ++k) {
              const std::size_t idx = (n * c + ch) * hw + k;
              if (gg) (*gg)[ch] += self.grad[idx] * (*xhat)[idx];
              if (gs) (*gs)[ch] += self.grad[idx];
            }
          }
        }
      });
}

Tensor conv2d_3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw DimensionError("conv2d_3x3: input must be CxHxW or NxCxHxW, got " + shape_str(x.shape()));
  }
  const bool batched = x.rank() == 4;
  const std::size_t off = batched ? 1 : 0;
  if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3 ||
      weight.dim(1) != x.dim(off)) {
    throw DimensionError("conv2d_3x3: weight " + shape_str(weight.shape()) +
                         " does not match input " + shape_str(x.shape()));
  }
  if (bias.numel() != weight.dim(0)) {
    throw DimensionError("conv2d_3x3: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  const kernels::ConvShape s{batched ? x.dim(0) : 1, x.dim(off), weight.dim(0), x.dim(off + 1),
                             x.dim(off + 2)};
  Shape out_shape = batched ? Shape{s.batch, s.c_out, s.height, s.width}
                            : Shape{s.c_out, s.height, s.width};
  std::vector<double> out(shape_numel(out_shape));
  kernels::omp::conv3x3_forward(s, x.data(), weight.data(), bias.data(), out);
  return Tensor::make_result("conv2d_3x3", std::move(out_shape), std::move(out), {x, weight, bias},
                             [s](Node& self) {
                               if (auto* g = grad_of(self, 0)) {
                                 kernels::omp::conv3x3_backward_input(s, self.grad, data_of(self, 1), *g);
                               }
                               auto* gw = grad_of(self, 1);
                               auto* gb = grad_of(self, 2);
                               if (gw || gb) {
                                 std::vector<double> dw(self.inputs[1]->data.size(), 0.0);
                                 std::vector<double> db(self.inputs[2]->data.size(), 0.0);
                                 kernels::omp::conv3x3_backward_weight(s, data_of(self, 0), self.grad, dw, db);
                                 if (gw) for (std::size_t i = 0; i < dw.size(); ++i) (*gw)[i] += dw[i];
                                 if (gb) for (std::size_t i = 0; i < db.size(); ++i) (*gb)[i] += db[i];
                               }
                             });
}

Tensor hardswish(const Tensor& x) {
  for (double v : x.data()) {
    BranchProbe::record(v < -3 ? 0 : (v > 3 ? 2 : 1), std::min(std::fabs(v + 3), std::fabs(v - 3)));
  }
  return unary(
      "hardswish", x, [](double v) { return v * std::clamp(v + 3.0, 0.0, 6.0) / 6.0; },
      [](Node& self) {
        const auto& xv = data_of(self, 0);
        auto* g = grad_of(self, 0);
        for (std::size_t i = 0; i < g->size(); ++i) {
          const double v = xv[i];
          // Closed interval: the kinks at +-3 take the interior slope.
          const double slope = v < -3 ? 0.0 : (v > 3 ? 1.0 : (2.0 * v + 3.0) / 6.0);
          (*g)[i] += self.grad[i] * slope;
        }
      });
}

Tensor sigmoid(const Tensor& x) {
  auto out = std::make_shared<std::vector<double>>(x.numel());
  for (std::size_t i = 0; i < out->size(); ++i) {
    const double v = x[i];
    const double e = std::exp(-std::fabs(v));
    (*out)[i] = v >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
  return Tensor::make_result("sigmoid", x.shape(), *out, {x}, [out](Node& self) {
    auto* g = grad_of(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) {
      (*g)[i] += self.grad[i] * (*out)[i] * (1.0 - (*out)[i]);
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](Node& self) {
        const auto& xv = data_of(self, 0);
        auto* g = grad_of(self, 0);
        for (std::size_t i = 0; i < g->size(); ++i) {
          const double v = xv[i];
          const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
          (*g)[i] += self.grad[i] * (cdf + v * pdf);
        }
      });
}

Tensor space_to_depth(const Tensor& x, std::size_t p) {
  require_rank("space_to_depth", x, 3);
  const std::size_t c = x.dim(0), height = x.dim(1), width = x.dim(2);
  if (p == 0 || height % p != 0 || width % p != 0) {
    throw DimensionError("patch size " + std::to_string(p) + " does not divide H=" +
                         std::to_string(height) + ", W=" + std::to_string(width));
  }
  const std::size_t h = height / p, w = width / p, f = c * p * p;
  // index map: token-major output position -> source position
  auto src = std::make_shared<std::vector<std::size_t>>(x.numel());
  for (std::size_t ti = 0; ti < h; ++ti)
    for (std::size_t tj = 0; tj < w; ++tj)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t dy = 0; dy < p; ++dy)
          for (std::size_t dx = 0; dx < p; ++dx)
            (*src)[(ti * w + tj) * f + (ch * p + dy) * p + dx] =
                (ch * height + ti * p + dy) * width + tj * p + dx;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[(*src)[i]];
  return Tensor::make_result("space_to_depth", {h * w, f}, std::move(out), {x}, [src](Node& self) {
    auto* g = grad_of(self, 0);
    for (std::size_t i = 0; i < src->size(); ++i) (*g)[(*src)[i]] += self.grad[i];
  });
}

Tensor depth_to_space(const Tensor& tokens, std::size_t channels, std::size_t height,
                      std::size_t width, std::size_t p) {
  require_rank("depth_to_space", tokens, 2);
  if (p == 0 || height % p != 0 || width % p != 0 ||
      tokens.dim(0) != (height / p) * (width / p) || tokens.dim(1) != channels * p * p) {
    throw DimensionError("depth_to_space: tokens " + shape_str(tokens.shape()) +
                         " cannot fill " + std::to_string(channels) + "x" +
                         std::to_string(height) + "x" + std::to_string(width) + " with p=" +
                         std::to_string(p));
  }
  const std::size_t w = width / p, f = channels * p * p;
  auto src = std::make_shared<std::vector<std::size_t>>(tokens.numel());
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t xx = 0; xx < width; ++xx)
        (*src)[(ch * height + y) * width + xx] =
            ((y / p) * w + xx / p) * f + (ch * p + y % p) * p + xx % p;
  std::vector<double> out(tokens.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = tokens[(*src)[i]];
  return Tensor::make_result("depth_to_space", {channels, height, width}, std::move(out), {tokens},
                             [src](Node& self) {
                               auto* g = grad_of(self, 0);
                               for (std::size_t i = 0; i < src->size(); ++i)
                                 (*g)[(*src)[i]] += self.grad[i];
                             });
}

Tensor batch_item(const Tensor& x, std::size_t n) {
  if (x.rank() < 2 || n >= x.dim(0)) {
    throw DimensionError("batch_item: index " + std::to_string(n) + " out of range for " +
                         shape_str(x.shape()));
  }
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t len = shape_numel(shape);
  std::vector<double> out(x.data().begin() + n * len, x.data().begin() + (n + 1) * len);
  return Tensor::make_result("batch_item", std::move(shape), std::move(out), {x},
                             [n, len](Node& self) {
                               auto* g = grad_of(self, 0);
                               for (std::size_t i = 0; i < len; ++i) (*g)[n * len + i] += self.grad[i];
                             });
}

Tensor stack(const std::vector<Tensor>& items) {
  if (items.empty()) throw DimensionError("stack: no tensors");
  const Shape& inner = items.front().shape();
  for (const auto& t : items) require_same_shape("stack", items.front(), t);
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  const std::size_t len = items.front().numel();
  std::vector<double> out;
  out.reserve(len * items.size());
  for (const auto& t : items) out.insert(out.end(), t.data().begin(), t.data().end());
  return Tensor::make_result("stack", std::move(shape), std::move(out), items,
                             [len](Node& self) {
                               for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                                 if (auto* g = grad_of(self, k)) {
                                   for (std::size_t i = 0; i < len; ++i) (*g)[i] += self.grad[k * len + i];
                                 }
                               }
                             });
}

namespace {

std::size_t reflect101(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i >= static_cast<std::ptrdiff_t>(n)) return 2 * n - 2 - static_cast<std::size_t>(i);
  return static_cast<std::size_t>(i);
}

Tensor sobel(const char* op, const Tensor& img, const double (&k)[3][3], bool horizontal) {
  require_rank(op, img, 2);
  const std::size_t h = img.dim(0), w = img.dim(1);
  if (h < 2 || w < 2) {
    throw DimensionError(std::string(op) + ": image must be at least 2x2, got " +
                         shape_str(img.shape()));
  }
  // Each output gathers 9 taps; the tap list doubles as the adjoint map.
  auto taps = std::make_shared<std::vector<std::size_t>>(h * w * 9);
  std::vector<double> out(h * w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      std::size_t* tap = &(*taps)[(i * w + j) * 9];
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          tap[ky * 3 + kx] = reflect101(static_cast<std::ptrdiff_t>(i) + ky - 1, h) * w +
                             reflect101(static_cast<std::ptrdiff_t>(j) + kx - 1, w);
        }
      }
      // Both kernels are antisymmetric; differencing mirrored taps first makes
      // the response at a reflected border exactly zero.
      double acc = 0.0;
      for (int a = 0; a < 3; ++a) {
        const int lo = horizontal ? a * 3 : a, hi = horizontal ? a * 3 + 2 : a + 6;
        acc += k[hi / 3][hi % 3] * (img[tap[hi]] - img[tap[lo]]);
      }
      out[i * w + j] = acc;
    }
  }
  double kernel[9];
  for (int t = 0; t < 9; ++t) kernel[t] = k[t / 3][t % 3];
  return Tensor::make_result(op, img.shape(), std::move(out), {img},
                             [taps, kernel = std::to_array(kernel)](Node& self) {
                               auto* g = grad_of(self, 0);
                               for (std::size_t o = 0; o < self.grad.size(); ++o)
                                 for (int t = 0; t < 9; ++t)
                                   (*g)[(*taps)[o * 9 + t]] += kernel[t] * self.grad[o];
                             });
}

constexpr double kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr double kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

}  // namespace

Tensor sobel_x(const Tensor& img) { return sobel("sobel_x", img, kSobelX, true); }
Tensor sobel_y(const Tensor& img) { return sobel("sobel_y", img, kSobelY, false); }

}  // namespace atfuse::ops
