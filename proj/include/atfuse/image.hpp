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
#include <filesystem>
#include <string>
#include <vector>

namespace atfuse {

// Single-channel image, row-major, values nominally in [0, 1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}
  GrayImage(std::size_t h, std::size_t w, std::vector<double> values);

  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  bool same_size(const GrayImage& o) const { return height == o.height && width == o.width; }
};

// Registered infrared / visible pair.
struct ImagePair {
  GrayImage ir;
  GrayImage vi;
};

struct NamedPair {
  std::string name;
  ImagePair pair;
};

struct PatchSet {
  std::size_t patch_size = 0;
  std::vector<ImagePair> patches;
  std::vector<std::size_t> source;                      // index into the input pairs
  std::vector<std::pair<std::size_t, std::size_t>> offset;  // (row, col) of top-left corner
};

// 8-bit binary PGM (P5) or 8-bit grayscale PNG; pixel p maps to p / 255.
GrayImage load_gray(const std::filesystem::path& path);
// Clamp to [0, 1], quantize with round-half-up, write P5 with maxval 255.
void save_gray(const GrayImage& img, const std::filesystem::path& path);

std::uint8_t quantize_pixel(double v);
// Snap every pixel onto the 1/255 grid the way save_gray would.
GrayImage quantize(const GrayImage& img);

GrayImage crop(const GrayImage& img, std::size_t row, std::size_t col, std::size_t h,
               std::size_t w);

// `count` crops of size P x P. Pair k draws from input pair k mod n; the
// top-left corner is uniform over all valid offsets and shared by ir and vi.
PatchSet random_patches(const std::vector<ImagePair>& pairs, std::size_t patch_size,
                        std::size_t count, std::uint64_t seed);

// Reads `dir/ir/NAME.{pgm,png}` and `dir/vi/NAME.{pgm,png}`, sorted by NAME.
std::vector<NamedPair> load_corpus(const std::filesystem::path& dir);

// Image files of a directory keyed by stem, sorted.
std::vector<std::pair<std::string, std::filesystem::path>> list_images(
    const std::filesystem::path& dir);

}  // namespace atfuse
