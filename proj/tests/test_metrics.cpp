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

#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "atfuse/error.hpp"
#include "atfuse/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace atfuse;
using namespace atfuse::metrics;
using atfuse::testing::random_grid_image;

namespace {

GrayImage flip_h(const GrayImage& im) {
  GrayImage out(im.height, im.width);
  for (std::size_t r = 0; r < im.height; ++r)
    for (std::size_t c = 0; c < im.width; ++c) out.at(r, c) = im.at(r, im.width - 1 - c);
  return out;
}

GrayImage flip_v(const GrayImage& im) {
  GrayImage out(im.height, im.width);
  for (std::size_t r = 0; r < im.height; ++r)
    for (std::size_t c = 0; c < im.width; ++c) out.at(r, c) = im.at(im.height - 1 - r, c);
  return out;
}

GrayImage edge_image(std::size_t n) {
  GrayImage im(n, n, 0.1);
  for (std::size_t r = 2; r < n - 2; ++r)
    for (std::size_t c = 2; c < n - 2; ++c) im.at(r, c) = 0.9;
  return im;
}

}  // namespace

TEST_CASE("metrics match double-loop oracles on 20 random 8x8 images") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const GrayImage f = random_grid_image(rng, 8, 8), a = random_grid_image(rng, 8, 8),
                    b = random_grid_image(rng, 8, 8);
    CHECK(std::fabs(avg_gradient(f) - oracle::ag(f)) < 1e-9);
    CHECK(std::fabs(entropy(f) - oracle::en(f)) < 1e-9);
    CHECK(std::fabs(std_dev(f) - oracle::sd(f)) < 1e-9);
    CHECK(std::fabs(spatial_frequency(f) - oracle::sf(f)) < 1e-9);
    CHECK(std::fabs(qabf(f, a, b) - oracle::qabf(f, a, b)) < 1e-9);
  }
}

TEST_CASE("average gradient") {
  CHECK(avg_gradient(GrayImage(5, 5, 0.4)) == 0.0);
  GrayImage ramp(6, 6);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) ramp.at(r, c) = r / 255.0;
  CHECK(avg_gradient(ramp) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(avg_gradient(GrayImage(1, 5)), DimensionError);
}

TEST_CASE("entropy") {
  CHECK(entropy(GrayImage(4, 4, 0.3)) == 0.0);
  GrayImage all(16, 16);
  for (std::size_t i = 0; i < 256; ++i) all.pixels[i] = i / 255.0;
  CHECK(entropy(all) == 8.0);
  GrayImage half(4, 4, 0.0);
  for (std::size_t i = 0; i < 8; ++i) half.pixels[i] = 1.0;
  CHECK(entropy(half) == 1.0);
}

TEST_CASE("standard deviation and spatial frequency") {
  CHECK(std_dev(GrayImage(3, 3, 0.7)) == 0.0);
  GrayImage half(2, 2, std::vector<double>{0, 1, 0, 1});
  CHECK(std_dev(half, 1.0) == 0.5);
  CHECK(std_dev(half) == 127.5);
  CHECK(spatial_frequency(GrayImage(3, 3, 0.7)) == 0.0);
  GrayImage row(1, 6, std::vector<double>{0, 1, 0, 1, 0, 1});
  CHECK(spatial_frequency(row) == 1.0);
}

TEST_CASE("qabf conventions") {
  const GrayImage e = edge_image(12);
  CHECK(qabf(e, e, e) > 0.95);
  // Perfect transfer from identical sources saturates at the sigmoid gains.
  CHECK(qabf(e, e, e) == doctest::Approx(oracle::qabf(e, e, e)).epsilon(1e-12));
  CHECK(qabf(GrayImage(6, 6, 0.2), GrayImage(6, 6, 0.4), GrayImage(6, 6, 0.9)) == 0.0);
  CHECK(qabf(GrayImage(12, 12, 0.5), e, flip_h(e)) < 0.1);
  Rng rng(72);
  for (int trial = 0; trial < 50; ++trial) {
    const double q = qabf(atfuse::testing::random_image(rng, 6, 7),
                          atfuse::testing::random_image(rng, 6, 7),
                          atfuse::testing::random_image(rng, 6, 7));
    CHECK(q >= 0.0);
    CHECK(q <= 1.0);
  }
  CHECK_THROWS_AS(qabf(e, e, GrayImage(3, 3)), DimensionError);
}

TEST_CASE("EN, SD, SF and Qabf are flip invariant") {
  Rng rng(73);
  for (int trial = 0; trial < 10; ++trial) {
    const GrayImage f = random_grid_image(rng, 7, 9), a = random_grid_image(rng, 7, 9),
                    b = random_grid_image(rng, 7, 9);
    for (auto flip : {flip_h, flip_v}) {
      const MetricReport base = evaluate(f, a, b), moved = evaluate(flip(f), flip(a), flip(b));
      CHECK(moved.en == base.en);
      CHECK(moved.sd == doctest::Approx(base.sd).epsilon(1e-12));
      CHECK(moved.sf == doctest::Approx(base.sf).epsilon(1e-12));
      CHECK(moved.qabf == doctest::Approx(base.qabf).epsilon(1e-12));
    }
  }
}

TEST_CASE("AG is transpose invariant but follows the forward stencil under flips") {
  Rng rng(76);
  for (int trial = 0; trial < 10; ++trial) {
    const GrayImage f = random_grid_image(rng, 7, 9);
    GrayImage t(9, 7);
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t c = 0; c < 9; ++c) t.at(c, r) = f.at(r, c);
    CHECK(avg_gradient(t) == doctest::Approx(avg_gradient(f)).epsilon(1e-12));
  }
  // A flip turns forward differences into backward ones, which pair a
  // different set of neighbours.
  GrayImage corner(3, 3, 0.0);
  corner.at(0, 0) = 1.0;
  CHECK(avg_gradient(corner, 1.0) == doctest::Approx(1.0 / 4));
  CHECK(avg_gradient(flip_h(corner), 1.0) == doctest::Approx(std::sqrt(0.5) / 4));
}

TEST_CASE("entropy ignores pixel order, gradients do not") {
  Rng rng(74);
  const GrayImage img = random_grid_image(rng, 8, 8);
  GrayImage shuffled = img;
  std::mt19937 g(1);
  std::shuffle(shuffled.pixels.begin(), shuffled.pixels.end(), g);
  CHECK(entropy(shuffled) == entropy(img));
  CHECK(avg_gradient(shuffled) != doctest::Approx(avg_gradient(img)));
  CHECK(spatial_frequency(shuffled) != doctest::Approx(spatial_frequency(img)));
}

TEST_CASE("corpus csv") {
  SUBCASE("empty corpus writes the header only") {
    std::ostringstream out;
    write_csv(out, {});
    CHECK(out.str() == "name,ag,en,sd,sf,qabf\n");
  }
  SUBCASE("mean row equals column means") {
    Rng rng(75);
    std::vector<NamedReport> rows;
    for (int i = 0; i < 5; ++i) {
      const GrayImage f = random_grid_image(rng, 8, 8);
      rows.push_back({"p" + std::to_string(i), evaluate(f, random_grid_image(rng, 8, 8),
                                                        random_grid_image(rng, 8, 8))});
    }
    std::ostringstream out;
    write_csv(out, rows);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> data;
    std::vector<double> mean;
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      std::string name, cell;
      std::getline(fields, name, ',');
      std::vector<double> values;
      while (std::getline(fields, cell, ',')) values.push_back(std::stod(cell));
      REQUIRE(values.size() == 5);
      if (name == "mean") mean = values;
      else data.push_back(values);
    }
    REQUIRE(data.size() == 5);
    for (std::size_t col = 0; col < 5; ++col) {
      double m = 0;
      for (const auto& r : data) m += r[col];
      CHECK(std::fabs(m / 5 - mean[col]) < 1e-9);
    }
  }
}
