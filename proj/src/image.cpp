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

#include "atfuse/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "atfuse/error.hpp"
#include "atfuse/rng.hpp"

#ifdef ATFUSE_HAVE_PNG
#include <png.h>
#endif

namespace atfuse {

namespace fs = std::filesystem;

GrayImage::GrayImage(std::size_t h, std::size_t w, std::vector<double> values)
    : height(h), width(w), pixels(std::move(values)) {
  if (pixels.size() != h * w) {
    throw DimensionError("image " + std::to_string(h) + "x" + std::to_string(w) + " given " +
                         std::to_string(pixels.size()) + " pixels");
  }
}

namespace {

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Header token reader for netpbm: whitespace and '#' comments separate fields.
class PnmHeader {
 public:
  PnmHeader(const std::vector<unsigned char>& bytes, const fs::path& path)
      : bytes_(bytes), path_(path) {}

  std::size_t number(const char* field) {
    skip_space();
    std::size_t value = 0;
    bool any = false;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      any = true;
      if (value > (1u << 30)) break;
    }
    if (!any) throw FormatError(path_.string() + ": malformed PGM header field '" + field + "'");
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError(path_.string() + ": missing whitespace before PGM raster");
    }
    return pos_ + 1;
  }

  void seek(std::size_t p) { pos_ = p; }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

GrayImage decode_pgm(const std::vector<unsigned char>& bytes, const fs::path& path) {
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw FormatError(path.string() + ": bad magic, expected P5");
  }
  if (bytes[1] == '6' || bytes[1] == '3') {
    throw FormatError(path.string() + ": color image rejected, expected grayscale P5");
  }
  if (bytes[1] != '5') throw FormatError(path.string() + ": bad magic, expected P5");
  PnmHeader header(bytes, path);
  header.seek(2);
  const std::size_t width = header.number("width");
  const std::size_t height = header.number("height");
  const std::size_t maxval = header.number("maxval");
  if (width == 0 || height == 0) {
    throw FormatError(path.string() + ": zero image dimension in header");
  }
  if (maxval != 255) {
    throw FormatError(path.string() + ": unsupported maxval " + std::to_string(maxval) +
                      " (only 8-bit, maxval 255)");
  }
  const std::size_t start = header.raster_start();
  if (bytes.size() < start + width * height) {
    throw FormatError(path.string() + ": truncated PGM raster");
  }
  GrayImage img(height, width);
  for (std::size_t i = 0; i < width * height; ++i) img.pixels[i] = bytes[start + i] / 255.0;
  return img;
}

#ifdef ATFUSE_HAVE_PNG
GrayImage decode_png(const std::vector<unsigned char>& bytes, const fs::path& path) {
  // IHDR is always the first chunk: width, height, bit depth, color type.
  if (bytes.size() < 33) throw FormatError(path.string() + ": truncated PNG header");
  const int bit_depth = bytes[24];
  const int color_type = bytes[25];
  if (color_type != 0) {
    throw FormatError(path.string() + ": color_type " + std::to_string(color_type) +
                      " rejected, expected 8-bit grayscale");
  }
  if (bit_depth != 8) {
    throw FormatError(path.string() + ": unsupported bit depth " + std::to_string(bit_depth));
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> raster(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raster.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": " + msg);
  }
  GrayImage img(image.height, image.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = raster[i] / 255.0;
  return img;
}
#endif

}  // namespace

GrayImage load_gray(const fs::path& path) {
  const auto bytes = read_bytes(path);
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) {
#ifdef ATFUSE_HAVE_PNG
    return decode_png(bytes, path);
#else
    throw FormatError(path.string() + ": PNG support not built");
#endif
  }
  return decode_pgm(bytes, path);
}

std::uint8_t quantize_pixel(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

GrayImage quantize(const GrayImage& img) {
  GrayImage out = img;
  for (auto& p : out.pixels) p = quantize_pixel(p) / 255.0;
  return out;
}

void save_gray(const GrayImage& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> raster(img.pixels.size());
  for (std::size_t i = 0; i < raster.size(); ++i) {
    raster[i] = static_cast<char>(quantize_pixel(img.pixels[i]));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw Error("write failed for " + path.string());
}

GrayImage crop(const GrayImage& img, std::size_t row, std::size_t col, std::size_t h,
               std::size_t w) {
  if (row + h > img.height || col + w > img.width) {
    throw DimensionError("crop out of bounds");
  }
  GrayImage out(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = img.at(row + r, col + c);
  return out;
}

PatchSet random_patches(const std::vector<ImagePair>& pairs, std::size_t patch_size,
                        std::size_t count, std::uint64_t seed) {
  if (patch_size == 0) throw DimensionError("patch size must be positive");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (!p.ir.same_size(p.vi)) {
      throw DimensionError("pair " + std::to_string(i) + " is not registered (size mismatch)");
    }
    if (p.ir.height < patch_size || p.ir.width < patch_size) {
      throw DimensionError("pair " + std::to_string(i) + " (" + std::to_string(p.ir.height) +
                           "x" + std::to_string(p.ir.width) + ") is smaller than patch size " +
                           std::to_string(patch_size));
    }
  }
  if (pairs.empty() && count > 0) throw DimensionError("no image pairs to crop from");
  PatchSet set;
  set.patch_size = patch_size;
  Rng rng(seed);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t src = k % pairs.size();
    const auto& p = pairs[src];
    const std::size_t row = rng.below(p.ir.height - patch_size + 1);
    const std::size_t col = rng.below(p.ir.width - patch_size + 1);
    set.patches.push_back({crop(p.ir, row, col, patch_size, patch_size),
                           crop(p.vi, row, col, patch_size, patch_size)});
    set.source.push_back(src);
    set.offset.emplace_back(row, col);
  }
  return set;
}

std::vector<std::pair<std::string, fs::path>> list_images(const fs::path& dir) {
  std::map<std::string, fs::path> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".png") found.emplace(entry.path().stem().string(), entry.path());
  }
  return {found.begin(), found.end()};
}

std::vector<NamedPair> load_corpus(const fs::path& dir) {
  const fs::path ir_dir = dir / "ir";
  const fs::path vi_dir = dir / "vi";
  for (const auto& d : {ir_dir, vi_dir}) {
    if (!fs::is_directory(d)) throw FormatError("corpus directory missing: " + d.string());
  }
  const auto ir_files = list_images(ir_dir);
  const auto vi_list = list_images(vi_dir);
  std::map<std::string, fs::path> vi_files(vi_list.begin(), vi_list.end());
  std::vector<NamedPair> out;
  for (const auto& [name, ir_path] : ir_files) {
    auto it = vi_files.find(name);
    if (it == vi_files.end()) {
      throw FormatError("no visible image for '" + name + "' in " + vi_dir.string());
    }
    NamedPair np{name, {load_gray(ir_path), load_gray(it->second)}};
    if (!np.pair.ir.same_size(np.pair.vi)) {
      throw DimensionError("pair '" + name + "' is not registered: ir " +
                           std::to_string(np.pair.ir.height) + "x" +
                           std::to_string(np.pair.ir.width) + " vs vi " +
                           std::to_string(np.pair.vi.height) + "x" +
                           std::to_string(np.pair.vi.width));
    }
    out.push_back(std::move(np));
  }
  return out;
}

}  // namespace atfuse
