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

#include "atfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "atfuse/rng.hpp"

namespace atfuse {

GrayImage bright_square(std::size_t height, std::size_t width, std::size_t top, std::size_t left,
                        std::size_t side, double level, double background) {
  GrayImage img(height, width, background);
  for (std::size_t r = top; r < std::min(height, top + side); ++r) {
    for (std::size_t c = left; c < std::min(width, left + side); ++c) img.at(r, c) = level;
  }
  return img;
}

GrayImage texture_field(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::vector<Wave> waves(4);
  for (auto& w : waves) {
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double freq = rng.uniform(0.15, 0.9);
    w = {freq * std::sin(angle), freq * std::cos(angle), rng.uniform(0.0, 2 * std::numbers::pi),
         rng.uniform(0.5, 1.0)};
  }
  GrayImage img(height, width);
  double lo = 1e300, hi = -1e300;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double v = rng.uniform(-0.15, 0.15);
      for (const auto& w : waves) v += w.amp * std::sin(w.fy * r + w.fx * c + w.phase);
      img.at(r, c) = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double span = hi > lo ? hi - lo : 1.0;
  for (auto& p : img.pixels) p = 0.15 + 0.7 * (p - lo) / span;
  return img;
}

ImagePair synthetic_pair(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t shortest = std::min(height, width);
  const std::size_t side = std::max<std::size_t>(2, shortest / 4 + rng.below(shortest / 4 + 1));
  const std::size_t top = rng.below(height - std::min(side, height) + 1);
  const std::size_t left = rng.below(width - std::min(side, width) + 1);
  GrayImage ir = bright_square(height, width, top, left, side, rng.uniform(0.8, 1.0), 0.0);
  for (auto& p : ir.pixels) p = std::clamp(p + rng.uniform(0.02, 0.12), 0.0, 1.0);
  return {std::move(ir), texture_field(height, width, rng.next())};
}

void write_synthetic_corpus(const std::filesystem::path& dir, std::size_t count,
                            std::size_t height, std::size_t width, std::uint64_t seed) {
  std::filesystem::create_directories(dir / "ir");
  std::filesystem::create_directories(dir / "vi");
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "pair%02zu.pgm", i);
    const ImagePair pair = synthetic_pair(height, width, rng.next());
    save_gray(pair.ir, dir / "ir" / name);
    save_gray(pair.vi, dir / "vi" / name);
  }
}

}  // namespace atfuse
