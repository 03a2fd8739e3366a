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

#include <vector>

#include "atfuse/tensor.hpp"

// Differentiable operations. Binary elementwise ops require identical shapes;
// the only implicit broadcast is the explicit scalar variants.
namespace atfuse::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor abs(const Tensor& x);
// Gradient goes to the larger side; ties go to `a`.
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// L1 norm.
Tensor abs_sum(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// x[n x d] + bias[d] on every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
// x[n x in] * w[in x out] + b[out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Row-wise softmax of a 2-D tensor with max subtraction.
Tensor softmax_rows(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps = 1e-6);

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormStats(std::size_t channels = 0)
      : mean(channels, 0.0), var(channels, 1.0) {}
};

enum class NormMode {
  kTrain,        // batch statistics, running stats updated
  kTrainFrozen,  // batch statistics, running stats untouched
  kEval,         // running statistics
};

// x is [N x C x H x W]. The running-variance update uses the unbiased batch
// variance; normalization uses the biased one.
Tensor batch_norm_2d(const Tensor& x, const Tensor& gain, const Tensor& shift,
                     BatchNormStats& stats, NormMode mode);

// 3x3 cross-correlation with zero padding 1. x is [C x H x W] or
// [N x C x H x W]; weight [C_out x C_in x 3 x 3]; bias [C_out].
Tensor conv2d_3x3(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor hardswish(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);

// [C x H x W] -> [(H/p * W/p) x (C*p*p)]; token t = (t / w, t % w), feature
// index (c * p + dy) * p + dx.
Tensor space_to_depth(const Tensor& x, std::size_t p);
// Exact inverse of space_to_depth.
Tensor depth_to_space(const Tensor& tokens, std::size_t channels, std::size_t height,
                      std::size_t width, std::size_t p);

// [N x ...] -> [...] for item n.
Tensor batch_item(const Tensor& x, std::size_t n);
// Stack equal-shape tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& items);

// 3x3 Sobel responses of a 2-D image with reflect-101 borders.
// Gx kernel [[-1,0,1],[-2,0,2],[-1,0,1]], Gy its transpose.
Tensor sobel_x(const Tensor& img);
Tensor sobel_y(const Tensor& img);

}  // namespace atfuse::ops
