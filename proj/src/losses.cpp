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

#include "atfuse/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "atfuse/error.hpp"
#include "atfuse/ops.hpp"

namespace atfuse {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 100.0)) throw ConfigError("loss.alpha must lie in [0, 100]");
  if (!(gamma >= 0.0)) throw ConfigError("loss.gamma must be non-negative");
}

Settings LossConfig::to_settings() const {
  return {{"loss.alpha", setting::format_double(alpha)},
          {"loss.gamma", setting::format_double(gamma)}};
}

bool LossConfig::apply(const std::string& key, const std::string& value) {
  if (key == "loss.alpha") alpha = setting::to_double(key, value);
  else if (key == "loss.gamma") gamma = setting::to_double(key, value);
  else return false;
  return true;
}

std::size_t PartitionMasks::part1_count() const {
  return static_cast<std::size_t>(std::count(part1.begin(), part1.end(), 1));
}

LossBreakdown LossTerms::values() const {
  return {part1.item(), part2.item(), pixel.item(), texture.item(), total.item()};
}

namespace {

void require_same_dims(const char* op, const Tensor& fused, const GrayImage& ir,
                       const GrayImage& vi) {
  if (fused.rank() != 2 || fused.dim(0) != ir.height || fused.dim(1) != ir.width ||
      !ir.same_size(vi)) {
    throw DimensionError(std::string(op) + ": fused " + shape_str(fused.shape()) + ", ir " +
                         std::to_string(ir.height) + "x" + std::to_string(ir.width) + ", vi " +
                         std::to_string(vi.height) + "x" + std::to_string(vi.width));
  }
}

Tensor constant(std::size_t h, std::size_t w, std::vector<double> values) {
  return Tensor::from({h, w}, std::move(values));
}

}  // namespace

Tensor image_tensor(const GrayImage& img) { return constant(img.height, img.width, img.pixels); }

Tensor sobel_grad_mag(const Tensor& img) {
  return ops::add(ops::abs(ops::sobel_x(img)), ops::abs(ops::sobel_y(img)));
}

std::vector<double> sobel_grad_mag(const GrayImage& img) {
  Tensor g = sobel_grad_mag(image_tensor(img));
  return {g.data().begin(), g.data().end()};
}

Tensor texture_loss(const Tensor& fused, const GrayImage& ir, const GrayImage& vi) {
  require_same_dims("texture_loss", fused, ir, vi);
  const std::size_t h = ir.height, w = ir.width;
  Tensor target = ops::maximum(constant(h, w, sobel_grad_mag(ir)), constant(h, w, sobel_grad_mag(vi)));
  return ops::mean(ops::abs(ops::sub(sobel_grad_mag(fused), target)));
}

std::vector<double> importance_map(const GrayImage& img) {
  std::vector<double> pi = sobel_grad_mag(img);
  for (std::size_t i = 0; i < pi.size(); ++i) pi[i] *= img.pixels[i];
  return pi;
}

double top_alpha_threshold(std::vector<double> values, double alpha) {
  const double exact = alpha / 100.0 * static_cast<double>(values.size());
  const auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  if (k == 0 || values.empty()) return std::numeric_limits<double>::infinity();
  const std::size_t rank = std::min(k, values.size()) - 1;
  std::nth_element(values.begin(), values.begin() + rank, values.end(), std::greater<>());
  return values[rank];
}

PartitionMasks partition_masks(const GrayImage& ir, const GrayImage& vi, double alpha) {
  if (!ir.same_size(vi)) throw DimensionError("partition_masks: sources differ in size");
  const auto pi_ir = importance_map(ir);
  const auto pi_vi = importance_map(vi);
  const double t_ir = top_alpha_threshold(pi_ir, alpha);
  const double t_vi = top_alpha_threshold(pi_vi, alpha);
  PartitionMasks m{ir.height, ir.width, std::vector<std::uint8_t>(pi_ir.size()),
                   std::vector<std::uint8_t>(pi_ir.size())};
  for (std::size_t i = 0; i < pi_ir.size(); ++i) {
    const bool first = pi_ir[i] >= t_ir || pi_vi[i] >= t_vi;
    m.part1[i] = first ? 1 : 0;
    m.part2[i] = first ? 0 : 1;
  }
  return m;
}

PixelLossTerms segmented_pixel_loss(const Tensor& fused, const GrayImage& ir, const GrayImage& vi,
                                    const PartitionMasks& masks) {
  require_same_dims("segmented_pixel_loss", fused, ir, vi);
  if (masks.height != ir.height || masks.width != ir.width) {
    throw DimensionError("segmented_pixel_loss: masks do not match the image size");
  }
  const std::size_t h = ir.height, w = ir.width;
  const double hw = static_cast<double>(h * w);
  std::vector<double> brightest(h * w), m1(h * w), m2(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    brightest[i] = std::max(ir.pixels[i], vi.pixels[i]);
    m1[i] = masks.part1[i];
    m2[i] = masks.part2[i];
  }
  const Tensor mask1 = constant(h, w, std::move(m1));
  const Tensor mask2 = constant(h, w, std::move(m2));
  Tensor part1 = ops::scale(
      ops::sum(ops::mul(ops::abs(ops::sub(fused, constant(h, w, std::move(brightest)))), mask1)),
      1.0 / hw);
  Tensor to_ir = ops::sum(ops::mul(ops::abs(ops::sub(fused, image_tensor(ir))), mask2));
  Tensor to_vi = ops::sum(ops::mul(ops::abs(ops::sub(fused, image_tensor(vi))), mask2));
  Tensor part2 = ops::scale(ops::add(to_ir, to_vi), 1.0 / (2.0 * hw));
  return {part1, part2, ops::add(part1, part2)};
}

LossTerms total_loss(const Tensor& fused, const GrayImage& ir, const GrayImage& vi,
                     const LossConfig& cfg) {
  cfg.validate();
  const PartitionMasks masks = partition_masks(ir, vi, cfg.alpha);
  PixelLossTerms pixel = segmented_pixel_loss(fused, ir, vi, masks);
  Tensor texture = texture_loss(fused, ir, vi);
  Tensor total = ops::add(pixel.pixel, ops::scale(texture, cfg.gamma));
  return {pixel.part1, pixel.part2, pixel.pixel, texture, total};
}

}  // namespace atfuse
