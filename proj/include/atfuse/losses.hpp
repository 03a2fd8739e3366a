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

#include <cstdint>
#include <vector>

#include "atfuse/config.hpp"
#include "atfuse/image.hpp"
#include "atfuse/tensor.hpp"

namespace atfuse {

struct LossConfig {
  double alpha = 20.0;  // percent of most important pixels per source
  double gamma = 1.0;   // texture weight

  void validate() const;
  Settings to_settings() const;
  bool apply(const std::string& key, const std::string& value);
};

// Disjoint cover of the image: part1 gets the max-selection constraint,
// part2 the average constraint.
struct PartitionMasks {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> part1;
  std::vector<std::uint8_t> part2;

  std::size_t part1_count() const;
};

struct LossBreakdown {
  double l_part1 = 0;
  double l_part2 = 0;
  double l_pixel = 0;
  double l_texture = 0;
  double total = 0;
};

// Differentiable loss terms; `values()` reads them out.
struct LossTerms {
  Tensor part1;
  Tensor part2;
  Tensor pixel;
  Tensor texture;
  Tensor total;

  LossBreakdown values() const;
};

Tensor image_tensor(const GrayImage& img);

// |Gx| + |Gy| with 3x3 Sobel kernels and reflect-101 borders, on a 2-D tensor.
Tensor sobel_grad_mag(const Tensor& img);
std::vector<double> sobel_grad_mag(const GrayImage& img);

// (1/HW) * || |grad f| - max(|grad ir|, |grad vi|) ||_1.
Tensor texture_loss(const Tensor& fused, const GrayImage& ir, const GrayImage& vi);

// |grad I| * I per pixel.
std::vector<double> importance_map(const GrayImage& img);

// Smallest value among the ceil(alpha% * n) largest entries; +inf when that
// count is zero, so `v >= threshold` selects the top alpha% plus ties.
double top_alpha_threshold(std::vector<double> values, double alpha);

PartitionMasks partition_masks(const GrayImage& ir, const GrayImage& vi, double alpha);

struct PixelLossTerms {
  Tensor part1;
  Tensor part2;
  Tensor pixel;
};

// Masks act as constants; both parts are normalized by the full pixel count.
PixelLossTerms segmented_pixel_loss(const Tensor& fused, const GrayImage& ir, const GrayImage& vi,
                                    const PartitionMasks& masks);

// L = L_pixel + gamma * L_texture for a single [H x W] fused image.
LossTerms total_loss(const Tensor& fused, const GrayImage& ir, const GrayImage& vi,
                     const LossConfig& cfg);

}  // namespace atfuse
