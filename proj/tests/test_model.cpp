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
#include <cstring>
#include <fstream>
#include <numeric>

#include "atfuse/checkpoint.hpp"
#include "atfuse/error.hpp"
#include "atfuse/model.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace atfuse;
using atfuse::testing::random_tensor;
using namespace atfuse::oracle;
namespace fs = std::filesystem;

namespace {

LinearParams zero_linear(std::size_t in, std::size_t out) {
  return {Tensor::zeros({in, out}), Tensor::zeros({out})};
}

LinearParams identity_linear(std::size_t d) {
  std::vector<double> w(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1.0;
  return {Tensor::from({d, d}, w), Tensor::zeros({d})};
}

AttentionBlockParams zero_block(std::size_t d, std::size_t hidden) {
  return {zero_linear(d, d),      zero_linear(d, d),      zero_linear(d, d),
          zero_linear(d, d),      Tensor::full({d}, 1.0), Tensor::zeros({d}),
          zero_linear(d, hidden), zero_linear(hidden, d)};
}

ModelConfig small_config() {
  ModelConfig c;
  c.shallow_channels = 4;
  c.patch_size = 4;
  c.embed_dim = 8;
  c.mlp_hidden = 16;
  c.seed = 3;
  return c;
}

ImagePair random_pair(Rng& rng, std::size_t h, std::size_t w) {
  return {atfuse::testing::random_image(rng, h, w), atfuse::testing::random_image(rng, h, w)};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST_CASE("attention blocks match a plain-loop reference") {
  Rng rng(41);
  const auto q = random_grid(rng, 2, 2, 8), kv = random_grid(rng, 2, 2, 8);
  const auto p = random_block(rng, 8, 16);
  CHECK(max_diff(diim_forward(q, kv, p).tokens, reference_block(q, kv, p, true)) < 1e-12);
  CHECK(max_diff(aciim_forward(kv, q, p).tokens, reference_block(q, kv, p, false)) < 1e-12);
}

TEST_CASE("DIIM differs from vanilla cross-attention") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = random_grid(rng, 2, 2, 8), kv = random_grid(rng, 2, 2, 8);
    const auto p = random_block(rng, 8, 16);
    const Mat vanilla = reference_block(q, kv, p, false);
    CHECK(max_diff(diim_forward(q, kv, p).tokens, vanilla) > 1e-3);
  }
}

TEST_CASE("single-token attention collapses") {
  Rng rng(43);
  const auto q = random_grid(rng, 1, 1, 8), kv = random_grid(rng, 1, 1, 8);
  SUBCASE("DIIM discrepancy is exactly zero") {
    auto p = random_block(rng, 8, 16);
    p.out.bias = Tensor::zeros({8});
    AttentionTrace trace;
    diim_forward(q, kv, p, &trace);
    CHECK(trace.attention.item() == 1.0);
    for (double x : trace.injected.data()) CHECK(x == 0.0);
    const Tensor proj_q = ops::linear(q.tokens, p.query.weight, p.query.bias);
    CHECK(atfuse::testing::max_abs_diff(trace.f_add.data(), proj_q.data()) == 0.0);
  }
  SUBCASE("ACIIM with identity output projection adds V to Q") {
    auto p = random_block(rng, 8, 16);
    p.out = identity_linear(8);
    AttentionTrace trace;
    aciim_forward(kv, q, p, &trace);
    const Tensor proj_q = ops::linear(q.tokens, p.query.weight, p.query.bias);
    const Tensor proj_v = ops::linear(kv.tokens, p.value.weight, p.value.bias);
    for (std::size_t c = 0; c < 8; ++c) {
      CHECK(trace.f_add[c] == doctest::Approx(proj_v[c] + proj_q[c]).epsilon(1e-14));
    }
  }
}

TEST_CASE("zero-path cases") {
  Rng rng(44);
  SUBCASE("Q = K = V = 0 with zero biases gives zero output") {
    auto p = random_block(rng, 8, 16);
    p.query = zero_linear(8, 8);
    p.key = zero_linear(8, 8);
    p.value = zero_linear(8, 8);
    p.out.bias = Tensor::zeros({8});
    p.ln_shift = Tensor::zeros({8});
    p.mlp_in.bias = Tensor::zeros({16});
    p.mlp_out.bias = Tensor::zeros({8});
    const auto out = diim_forward(random_grid(rng, 2, 2, 8), random_grid(rng, 2, 2, 8), p);
    for (double x : out.tokens.data()) CHECK(x == 0.0);
  }
  SUBCASE("zero K and V reduce ACIIM to the residual path") {
    auto p = random_block(rng, 8, 16);
    p.key = zero_linear(8, 8);
    p.value = zero_linear(8, 8);
    p.out.bias = Tensor::zeros({8});
    const auto q = random_grid(rng, 2, 2, 8);
    AttentionTrace trace;
    aciim_forward(random_grid(rng, 2, 2, 8), q, p, &trace);
    const Tensor proj_q = ops::linear(q.tokens, p.query.weight, p.query.bias);
    CHECK(atfuse::testing::max_abs_diff(trace.f_add.data(), proj_q.data()) == 0.0);
  }
  SUBCASE("all-zero fusion parameters give zero output") {
    std::vector<FusionBlockParams> blocks{{zero_block(8, 16), zero_block(8, 16), zero_block(8, 16)}};
    const auto out = feature_fusion(random_grid(rng, 2, 2, 8), random_grid(rng, 2, 2, 8), blocks,
                                    Variant::kFull);
    for (double x : out.tokens.data()) CHECK(x == 0.0);
  }
}

TEST_CASE("attention rows sum to one") {
  Rng rng(45);
  AttentionTrace trace;
  diim_forward(random_grid(rng, 2, 4, 8), random_grid(rng, 2, 4, 8), random_block(rng, 8, 16),
               &trace);
  for (std::size_t i = 0; i < 8; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < 8; ++j) total += trace.attention[i * 8 + j];
    CHECK(std::fabs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("fusion output is Z3 + Z1 exactly") {
  Rng rng(46);
  for (std::size_t n_blocks : {1u, 2u}) {
    std::vector<FusionBlockParams> blocks;
    for (std::size_t b = 0; b < n_blocks; ++b)
      blocks.push_back({random_block(rng, 8, 16), random_block(rng, 8, 16), random_block(rng, 8, 16)});
    FusionTrace trace;
    const auto ir = random_grid(rng, 2, 2, 8), vi = random_grid(rng, 2, 2, 8);
    const auto out = feature_fusion(ir, vi, blocks, Variant::kFull, &trace);
    REQUIRE(trace.blocks.size() == n_blocks);
    for (const auto& b : trace.blocks) {
      for (std::size_t i = 0; i < out.tokens.numel(); ++i) {
        CHECK(b.output.tokens[i] == b.z3.tokens[i] + b.z1.tokens[i]);
      }
    }
    CHECK(atfuse::testing::max_abs_diff(out.tokens.data(), trace.blocks.back().output.tokens.data()) == 0.0);
    // Block wiring: Z1 = DIIM(Q <- vi, KV <- ir), Z2 = ACIIM(KV <- vi, Q <- Z1),
    // Z3 = ACIIM(KV <- ir, Q <- Z2).
    const auto& t = trace.blocks[0];
    CHECK(max_diff(t.z1.tokens, reference_block(vi, ir, *blocks[0].diim, true)) < 1e-12);
    CHECK(max_diff(t.z2.tokens, reference_block(t.z1, vi, *blocks[0].aciim_vi, false)) < 1e-12);
    CHECK(max_diff(t.z3.tokens, reference_block(t.z2, ir, *blocks[0].aciim_ir, false)) < 1e-12);
  }
}

TEST_CASE("ablation variants change the output") {
  Rng rng(47);
  std::vector<FusionBlockParams> blocks{{random_block(rng, 8, 16), random_block(rng, 8, 16), random_block(rng, 8, 16)}};
  const auto ir = random_grid(rng, 2, 2, 8), vi = random_grid(rng, 2, 2, 8);
  const auto full = feature_fusion(ir, vi, blocks, Variant::kFull);
  FusionTrace no_diim_trace;
  const auto no_diim = feature_fusion(ir, vi, blocks, Variant::kNoDiim, &no_diim_trace);
  const auto no_aciim = feature_fusion(ir, vi, blocks, Variant::kNoAciim);
  CHECK(atfuse::testing::max_abs_diff(full.tokens.data(), no_diim.tokens.data()) > 1e-3);
  CHECK(atfuse::testing::max_abs_diff(full.tokens.data(), no_aciim.tokens.data()) > 1e-3);
  // Without DIIM the chain is seeded with the visible tokens.
  CHECK(atfuse::testing::max_abs_diff(no_diim_trace.blocks[0].z1.tokens.data(), vi.tokens.data()) == 0.0);
  // Without ACIIM the output is Z1.
  CHECK(max_diff(no_aciim.tokens, reference_block(vi, ir, *blocks[0].diim, true)) < 1e-12);
}

TEST_CASE("attention is permutation equivariant") {
  Rng rng(48);
  const std::size_t s = 6, d = 8;
  const auto q = random_grid(rng, 2, 3, d), kv = random_grid(rng, 2, 3, d);
  const auto p = random_block(rng, d, 16);
  std::vector<std::size_t> perm(s);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937 shuffle_rng(3);
  std::shuffle(perm.begin(), perm.end(), shuffle_rng);
  auto permute = [&](const TokenGrid& g) {
    std::vector<double> v(s * d);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t c = 0; c < d; ++c) v[i * d + c] = g.tokens[perm[i] * d + c];
    return TokenGrid{Tensor::from({s, d}, v), g.h, g.w};
  };
  for (bool discrepancy : {true, false}) {
    const auto base = discrepancy ? diim_forward(q, kv, p) : aciim_forward(kv, q, p);
    const auto moved = discrepancy ? diim_forward(permute(q), permute(kv), p)
                                   : aciim_forward(permute(kv), permute(q), p);
    double worst = 0;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t c = 0; c < d; ++c)
        worst = std::max(worst, std::fabs(moved.tokens[i * d + c] - base.tokens[perm[i] * d + c]));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("shallow extraction") {
  ModelConfig cfg;
  AtfuseModel model(cfg);
  Rng rng(49);
  const GrayImage img = atfuse::testing::random_image(rng, 32, 32);
  const Tensor f = shallow_extract(image_batch({&img}), model.extract_ir, ops::NormMode::kEval);
  CHECK(f.shape() == Shape{1, 16, 32, 32});
  ExtractorParams zero{{Tensor::zeros({16, 1, 3, 3}), Tensor::zeros({16})},
                       {Tensor::full({16}, 1.0), Tensor::zeros({16}), ops::BatchNormStats(16)}};
  const Tensor z = shallow_extract(image_batch({&img}), zero, ops::NormMode::kTrain);
  for (double x : z.data()) CHECK(x == 0.0);
  const GrayImage tiny(2, 2);
  CHECK_THROWS_AS(shallow_extract(image_batch({&tiny}), model.extract_ir, ops::NormMode::kEval),
                  DimensionError);
}

TEST_CASE("patch embedding") {
  Rng rng(50);
  SUBCASE("shape arithmetic") {
    const Tensor f = random_tensor(rng, {16, 32, 32});
    const auto grid = patch_embed(f, 4, random_linear(rng, 16 * 16, 32));
    CHECK(grid.size() == 64);
    CHECK(grid.h == 8);
    CHECK(grid.tokens.shape() == Shape{64, 32});
  }
  SUBCASE("p = 1 with identity embedding yields per-pixel feature vectors") {
    const Tensor f = random_tensor(rng, {3, 2, 4});
    const auto grid = patch_embed(f, 1, identity_linear(3));
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t c = 0; c < 3; ++c) CHECK(grid.tokens[t * 3 + c] == f[c * 8 + t]);
  }
  SUBCASE("unembed(embed(x)) == x for identity projections") {
    const Tensor f = random_tensor(rng, {2, 8, 4});
    const auto grid = patch_embed(f, 2, identity_linear(8));
    const Tensor back = patch_unembed(grid, 2, 2, identity_linear(8));
    CHECK(atfuse::testing::max_abs_diff(back.data(), f.data()) == 0.0);
  }
  SUBCASE("indivisible dims name H, W and p") {
    try {
      patch_embed(random_tensor(rng, {2, 6, 8}), 4, random_linear(rng, 32, 8));
      FAIL("expected an error");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find('6') != std::string::npos);
      CHECK(msg.find('8') != std::string::npos);
    }
  }
}

TEST_CASE("reconstruction") {
  Rng rng(51);
  AtfuseModel model(small_config());
  std::vector<TokenGrid> grids{random_grid(rng, 2, 3, 8)};
  const Tensor out = model.reconstruct(grids, 8, 12, ops::NormMode::kEval);
  CHECK(out.shape() == Shape{1, 1, 8, 12});
  for (double x : out.data()) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
  for (auto& x : model.out.weight.mutable_data()) x = 0.0;
  for (auto& x : model.out.bias.mutable_data()) x = 0.0;
  const Tensor flat = model.reconstruct(grids, 8, 12, ops::NormMode::kEval);
  for (double x : flat.data()) CHECK(x == 0.5);
}

TEST_CASE("fuse_images") {
  Rng rng(52);
  AtfuseModel model(ModelConfig{});
  const ImagePair pair = random_pair(rng, 32, 32);
  const GrayImage a = fuse_images(model, pair);
  CHECK(a.height == 32);
  CHECK(a.width == 32);
  for (double x : a.pixels) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
  CHECK(fuse_images(model, pair).pixels == a.pixels);
  try {
    fuse_images(model, random_pair(rng, 30, 32));
    FAIL("expected an error");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("pad or crop") != std::string::npos);
  }
  // Shape conservation over several valid configurations.
  for (std::size_t p : {1u, 2u, 4u}) {
    ModelConfig c = small_config();
    c.patch_size = p;
    AtfuseModel m(c);
    const GrayImage out = fuse_images(m, random_pair(rng, 8, 12));
    CHECK(out.height == 8);
    CHECK(out.width == 12);
  }
}

TEST_CASE("parameter inventory") {
  ModelConfig cfg = small_config();
  AtfuseModel model(cfg);
  std::size_t total = 0;
  for (auto& p : model.parameters()) {
    total += p.value.numel();
    for (double x : p.value.data()) CHECK(std::isfinite(x));
  }
  CHECK(total == model.parameter_count());
  CHECK(parameter_count(cfg) == model.parameter_count());
  const std::size_t C = 4, p = 4, d = 8, hid = 16;
  const std::size_t block = 4 * (d * d + d) + 2 * d + (d * hid + hid) + (hid * d + d);
  const std::size_t expected = 2 * (C * 9 + C + 2 * C) + 2 * (C * p * p * d + d) + 3 * block +
                               (d * C * p * p + C * p * p) + 2 * (2 * (C * C * 9 + C) + 2 * C) +
                               (C * 9 + 1);
  CHECK(parameter_count(cfg) == expected);

  cfg.variant = Variant::kNoDiim;
  CHECK(parameter_count(cfg) == expected - block);
  cfg.variant = Variant::kNoAciim;
  CHECK(parameter_count(cfg) == expected - 2 * block);
}

TEST_CASE("initialization is seeded") {
  ModelConfig cfg = small_config();
  AtfuseModel a(cfg), b(cfg);
  CHECK(parameter_checksum(a) == parameter_checksum(b));
  cfg.seed = 4;
  AtfuseModel c(cfg);
  CHECK(parameter_checksum(a) != parameter_checksum(c));
}

TEST_CASE("checkpoint roundtrip and errors") {
  const fs::path dir = atfuse::testing::temp_dir("ckpt");
  ModelConfig cfg = small_config();
  AtfuseModel model(cfg);
  // Move running statistics away from their defaults.
  Rng rng(53);
  const ImagePair pair = random_pair(rng, 8, 8);
  model.forward(image_batch({&pair.ir}), image_batch({&pair.vi}), ops::NormMode::kTrain);
  model.round_to_storage();
  save_checkpoint(model, dir / "m.atf");
  CHECK(fs::exists(dir / "m.cfg"));

  SUBCASE("bitwise roundtrip") {
    AtfuseModel loaded = load_checkpoint(dir / "m.atf");
    CHECK(loaded.config() == cfg);
    auto pa = model.parameters(), pb = loaded.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].name == pb[i].name);
      CHECK(std::memcmp(pa[i].value.data().data(), pb[i].value.data().data(),
                        pa[i].value.numel() * sizeof(double)) == 0);
    }
    auto ba = model.buffers(), bb = loaded.buffers();
    for (std::size_t i = 0; i < ba.size(); ++i) CHECK(*ba[i].second == *bb[i].second);
    save_checkpoint(loaded, dir / "again.atf");
    CHECK(read_file(dir / "again.atf") == read_file(dir / "m.atf"));
    CHECK(fuse_images(loaded, pair).pixels == fuse_images(model, pair).pixels);
  }
  SUBCASE("corrupt magic") {
    std::string bytes = read_file(dir / "m.atf");
    bytes[0] = 'X';
    write_file(dir / "bad.atf", bytes);
    try {
      load_checkpoint(dir / "bad.atf");
      FAIL("expected an error");
    } catch (const CheckpointError& e) {
      CHECK(std::string(e.what()) == "bad checkpoint magic");
    }
  }
  SUBCASE("truncation") {
    const std::string bytes = read_file(dir / "m.atf");
    write_file(dir / "short.atf", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "short.atf"), "truncated checkpoint",
                         CheckpointError);
  }
  SUBCASE("config that disagrees with blob shapes") {
    std::string bytes = read_file(dir / "m.atf");
    const std::string from = "model.embed_dim = 8\n", to = "model.embed_dim = 9\n";
    const auto at = bytes.find(from);
    REQUIRE(at != std::string::npos);
    bytes.replace(at, from.size(), to);
    write_file(dir / "shape.atf", bytes);
    try {
      load_checkpoint(dir / "shape.atf");
      FAIL("expected an error");
    } catch (const CheckpointError& e) {
      CHECK(std::string(e.what()).find("shape inconsistency") != std::string::npos);
    }
  }
  SUBCASE("no_diim checkpoints carry no DIIM blobs") {
    ModelConfig nd = small_config();
    nd.variant = Variant::kNoDiim;
    AtfuseModel m(nd);
    save_checkpoint(m, dir / "nd.atf");
    const std::string bytes = read_file(dir / "nd.atf");
    CHECK(bytes.find(".diim.") == std::string::npos);
    CHECK(bytes.find(".aciim_vi.") != std::string::npos);
    CHECK(read_file(dir / "m.atf").find(".diim.") != std::string::npos);
    CHECK(load_checkpoint(dir / "nd.atf").config().variant == Variant::kNoDiim);
  }
  fs::remove_all(dir);
}

TEST_CASE("model config text") {
  ModelConfig c = small_config();
  c.variant = Variant::kNoAciim;
  CHECK(ModelConfig::from_settings(c.to_settings()) == c);
  CHECK_FALSE(c.apply("loss.alpha", "3"));
  CHECK_THROWS_AS(c.apply("model.variant", "half"), ConfigError);
  ModelConfig bad = small_config();
  bad.embed_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
