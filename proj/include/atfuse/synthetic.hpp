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

#include <filesystem>
#include <vector>

#include "atfuse/image.hpp"

namespace atfuse {

// Uniform square of `level` on `background`, other pixels untouched.
GrayImage bright_square(std::size_t height, std::size_t width, std::size_t top, std::size_t left,
                        std::size_t side, double level = 0.9, double background = 0.05);

// Sum of random oriented gratings plus mild noise, mapped into [0.15, 0.85].
GrayImage texture_field(std::size_t height, std::size_t width, std::uint64_t seed);

// Infrared target (square of random size and place on a dark, slightly noisy
// background) registered with a visible texture field.
ImagePair synthetic_pair(std::size_t height, std::size_t width, std::uint64_t seed);

// Writes `count` synthetic pairs as dir/ir/pairNN.pgm and dir/vi/pairNN.pgm.
void write_synthetic_corpus(const std::filesystem::path& dir, std::size_t count,
                            std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace atfuse
