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

#include "atfuse/model.hpp"

#include <cmath>

#include "atfuse/error.hpp"
#include "atfuse/rng.hpp"

namespace atfuse {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull:
      return "full";
    case Variant::kNoDiim:
      return "no_diim";
    case Variant::kNoAciim:
      return "no_aciim";
  }
  return "full";
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "no_diim") return Variant::kNoDiim;
  if (name == "no_aciim") return Variant::kNoAciim;
  throw ConfigError("unknown model variant '" + name + "' (full, no_diim, no_aciim)");
}

void ModelConfig::validate() const {
  if (shallow_channels == 0 || patch_size == 0 || embed_dim == 0 || mlp_hidden == 0 ||
      n_fusion_blocks == 0) {
    throw ConfigError("model dimensions must be positive");
  }
}

Settings ModelConfig::to_settings() const {
  return {
      {"model.shallow_channels", std::to_string(shallow_channels)},
      {"model.patch_size", std::to_string(patch_size)},
      {"model.embed_dim", std::to_string(embed_dim)},
      {"model.mlp_hidden", std::to_string(mlp_hidden)},
      {"model.n_fusion_blocks", std::to_string(n_fusion_blocks)},
      {"model.refine_blocks", std::to_string(refine_blocks)},
      {"model.seed", std::to_string(seed)},
      {"model.variant", variant_name(variant)},
  };
}

bool ModelConfig::apply(const std::string& key, const std::string& value) {
  if (key == "model.shallow_channels") shallow_channels = setting::to_size(key, value);
  else if (key == "model.patch_size") patch_size = setting::to_size(key, value);
  else if (key == "model.embed_dim") embed_dim = setting::to_size(key, value);
  else if (key == "model.mlp_hidden") mlp_hidden = setting::to_size(key, value);
  else if (key == "model.n_fusion_blocks") n_fusion_blocks = setting::to_size(key, value);
  else if (key == "model.refine_blocks") refine_blocks = setting::to_size(key, value);
  else if (key == "model.seed") seed = setting::to_u64(key, value);
  else if (key == "model.variant") variant = parse_variant(value);
  else return false;
  return true;
}

ModelConfig ModelConfig::from_settings(const Settings& settings) {
  ModelConfig cfg;
  for (const auto& [k, v] : settings) {
    if (!cfg.apply(k, v)) throw ConfigError("unknown model setting '" + k + "'");
  }
  cfg.validate();
  return cfg;
}

namespace {

double to_storage(double v) { return static_cast<double>(static_cast<float>(v)); }

// Uniform fan-in scaling: U(-b, b), b = sqrt(3 / fan_in), i.e. unit-gain
// variance 1 / fan_in. Values start on the float32 grid.
Tensor uniform_weight(Rng& rng, Shape shape, std::size_t fan_in) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = to_storage(rng.uniform(-bound, bound));
  return Tensor::from(std::move(shape), std::move(v), true);
}

LinearParams make_linear(Rng& rng, std::size_t in, std::size_t out) {
  return {uniform_weight(rng, {in, out}, in), Tensor::zeros({out}, true)};
}

ConvParams make_conv(Rng& rng, std::size_t in, std::size_t out) {
  return {uniform_weight(rng, {out, in, 3, 3}, in * 9), Tensor::zeros({out}, true)};
}

NormParams make_norm(std::size_t channels) {
  return {Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true),
          ops::BatchNormStats(channels)};
}

AttentionBlockParams make_attention(Rng& rng, std::size_t d, std::size_t hidden) {
  AttentionBlockParams p;
  p.query = make_linear(rng, d, d);
  p.key = make_linear(rng, d, d);
  p.value = make_linear(rng, d, d);
  p.out = make_linear(rng, d, d);
  p.ln_gain = Tensor::full({d}, 1.0, true);
  p.ln_shift = Tensor::zeros({d}, true);
  p.mlp_in = make_linear(rng, d, hidden);
  p.mlp_out = make_linear(rng, hidden, d);
  return p;
}

void push_linear(std::vector<NamedTensor>& out, const std::string& prefix, const LinearParams& p) {
  out.push_back({prefix + ".weight", p.weight});
  out.push_back({prefix + ".bias", p.bias});
}

void push_conv(std::vector<NamedTensor>& out, const std::string& prefix, const ConvParams& p) {
  out.push_back({prefix + ".weight", p.weight});
  out.push_back({prefix + ".bias", p.bias});
}

void push_norm(std::vector<NamedTensor>& out, const std::string& prefix, const NormParams& p) {
  out.push_back({prefix + ".gain", p.gain});
  out.push_back({prefix + ".shift", p.shift});
}

void push_attention(std::vector<NamedTensor>& out, const std::string& prefix,
                    const AttentionBlockParams& p) {
  push_linear(out, prefix + ".query", p.query);
  push_linear(out, prefix + ".key", p.key);
  push_linear(out, prefix + ".value", p.value);
  push_linear(out, prefix + ".out", p.out);
  out.push_back({prefix + ".ln.gain", p.ln_gain});
  out.push_back({prefix + ".ln.shift", p.ln_shift});
  push_linear(out, prefix + ".mlp_in", p.mlp_in);
  push_linear(out, prefix + ".mlp_out", p.mlp_out);
}

void require_same_grid(const char* op, const TokenGrid& a, const TokenGrid& b) {
  if (a.size() != b.size() || a.tokens.dim(1) != b.tokens.dim(1)) {
    throw DimensionError(std::string(op) + ": token grids differ, " + shape_str(a.tokens.shape()) +
                         " vs " + shape_str(b.tokens.shape()));
  }
}

}  // namespace

TokenGrid attention_block(const TokenGrid& query, const TokenGrid& source,
                          const AttentionBlockParams& params, Injection injection,
                          AttentionTrace* trace) {
  require_same_grid("attention_block", query, source);
  const double d_k = static_cast<double>(query.tokens.dim(1));
  Tensor q = ops::linear(query.tokens, params.query.weight, params.query.bias);
  Tensor k = ops::linear(source.tokens, params.key.weight, params.key.bias);
  Tensor v = ops::linear(source.tokens, params.value.weight, params.value.bias);
  Tensor attn = ops::softmax_rows(ops::scale(ops::matmul(q, ops::transpose(k)), 1.0 / std::sqrt(d_k)));
  Tensor common = ops::matmul(attn, v);
  Tensor info = injection == Injection::kDiscrepancy ? ops::sub(v, common) : common;
  Tensor injected = ops::linear(info, params.out.weight, params.out.bias);
  Tensor f_add = ops::add(injected, q);
  Tensor normed = ops::layer_norm(f_add, params.ln_gain, params.ln_shift, 1e-6);
  Tensor hidden = ops::gelu(ops::linear(normed, params.mlp_in.weight, params.mlp_in.bias));
  Tensor mlp = ops::linear(hidden, params.mlp_out.weight, params.mlp_out.bias);
  if (trace) *trace = {attn, common, injected, f_add};
  return {ops::add(mlp, f_add), query.h, query.w};
}

TokenGrid diim_forward(const TokenGrid& query, const TokenGrid& source,
                       const AttentionBlockParams& params, AttentionTrace* trace) {
  return attention_block(query, source, params, Injection::kDiscrepancy, trace);
}

TokenGrid aciim_forward(const TokenGrid& source, const TokenGrid& query,
                        const AttentionBlockParams& params, AttentionTrace* trace) {
  return attention_block(query, source, params, Injection::kCommon, trace);
}

TokenGrid feature_fusion(const TokenGrid& ir, const TokenGrid& vi,
                         const std::vector<FusionBlockParams>& blocks, Variant variant,
                         FusionTrace* trace) {
  require_same_grid("feature_fusion", ir, vi);
  TokenGrid running = vi;
  for (const auto& block : blocks) {
    FusionBlockTrace t;
    TokenGrid z1 = variant == Variant::kNoDiim
                       ? running
                       : diim_forward(running, ir, *block.diim, trace ? &t.diim : nullptr);
    TokenGrid out;
    if (variant == Variant::kNoAciim) {
      out = z1;
    } else {
      t.z2 = aciim_forward(vi, z1, *block.aciim_vi, trace ? &t.aciim_vi : nullptr);
      t.z3 = aciim_forward(ir, t.z2, *block.aciim_ir, trace ? &t.aciim_ir : nullptr);
      out = {ops::add(t.z3.tokens, z1.tokens), z1.h, z1.w};
    }
    if (trace) {
      t.z1 = z1;
      t.output = out;
      trace->blocks.push_back(std::move(t));
    }
    running = out;
  }
  return running;
}

Tensor shallow_extract(const Tensor& images, ExtractorParams& params, ops::NormMode mode) {
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) < 3 || images.dim(3) < 3) {
    throw DimensionError("shallow_extract: expected N x 1 x H x W with H, W >= 3, got " +
                         shape_str(images.shape()));
  }
  Tensor y = ops::conv2d_3x3(images, params.conv.weight, params.conv.bias);
  y = ops::batch_norm_2d(y, params.bn.gain, params.bn.shift, params.bn.stats, mode);
  return ops::hardswish(y);
}

TokenGrid patch_embed(const Tensor& features, std::size_t patch_size, const LinearParams& embed) {
  if (features.rank() != 3) {
    throw DimensionError("patch_embed: expected C x H x W, got " + shape_str(features.shape()));
  }
  Tensor flat = ops::space_to_depth(features, patch_size);
  return {ops::linear(flat, embed.weight, embed.bias), features.dim(1) / patch_size,
          features.dim(2) / patch_size};
}

Tensor patch_unembed(const TokenGrid& grid, std::size_t channels, std::size_t patch_size,
                     const LinearParams& up) {
  Tensor flat = ops::linear(grid.tokens, up.weight, up.bias);
  return ops::depth_to_space(flat, channels, grid.h * patch_size, grid.w * patch_size, patch_size);
}

AtfuseModel::AtfuseModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const std::size_t c = config_.shallow_channels;
  const std::size_t p = config_.patch_size;
  const std::size_t d = config_.embed_dim;
  extract_ir = {make_conv(rng, 1, c), make_norm(c)};
  extract_vi = {make_conv(rng, 1, c), make_norm(c)};
  embed_ir = make_linear(rng, c * p * p, d);
  embed_vi = make_linear(rng, c * p * p, d);
  for (std::size_t b = 0; b < config_.n_fusion_blocks; ++b) {
    FusionBlockParams block;
    if (config_.variant != Variant::kNoDiim) block.diim = make_attention(rng, d, config_.mlp_hidden);
    if (config_.variant != Variant::kNoAciim) {
      block.aciim_vi = make_attention(rng, d, config_.mlp_hidden);
      block.aciim_ir = make_attention(rng, d, config_.mlp_hidden);
    }
    fusion.push_back(std::move(block));
  }
  up = make_linear(rng, d, c * p * p);
  for (std::size_t r = 0; r < config_.refine_blocks; ++r) {
    refine.push_back({make_conv(rng, c, c), make_norm(c), make_conv(rng, c, c)});
  }
  out = make_conv(rng, c, 1);
}

Tensor AtfuseModel::forward(const Tensor& ir, const Tensor& vi, ops::NormMode mode,
                            std::vector<FusionTrace>* traces) {
  if (ir.shape() != vi.shape()) {
    throw DimensionError("forward: ir " + shape_str(ir.shape()) + " and vi " +
                         shape_str(vi.shape()) + " differ");
  }
  if (ir.rank() != 4) throw DimensionError("forward: expected N x 1 x H x W inputs");
  const std::size_t height = ir.dim(2), width = ir.dim(3), p = config_.patch_size;
  if (height % p != 0 || width % p != 0) {
    throw DimensionError("image " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by patch size " + std::to_string(p) +
                         "; pad or crop the inputs to a multiple of " + std::to_string(p));
  }
  Tensor f_ir = shallow_extract(ir, extract_ir, mode);
  Tensor f_vi = shallow_extract(vi, extract_vi, mode);
  std::vector<TokenGrid> fused;
  if (traces) traces->assign(ir.dim(0), {});
  for (std::size_t n = 0; n < ir.dim(0); ++n) {
    TokenGrid t_ir = patch_embed(ops::batch_item(f_ir, n), p, embed_ir);
    TokenGrid t_vi = patch_embed(ops::batch_item(f_vi, n), p, embed_vi);
    fused.push_back(feature_fusion(t_ir, t_vi, fusion, config_.variant,
                                   traces ? &(*traces)[n] : nullptr));
  }
  return reconstruct(fused, height, width, mode);
}

Tensor AtfuseModel::reconstruct(const std::vector<TokenGrid>& fused, std::size_t height,
                                std::size_t width, ops::NormMode mode) {
  const std::size_t c = config_.shallow_channels, p = config_.patch_size;
  std::vector<Tensor> maps;
  for (const auto& grid : fused) {
    if (grid.h * p != height || grid.w * p != width) {
      throw DimensionError("reconstruct: token grid " + std::to_string(grid.h) + "x" +
                           std::to_string(grid.w) + " does not cover " + std::to_string(height) +
                           "x" + std::to_string(width));
    }
    maps.push_back(patch_unembed(grid, c, p, up));
  }
  Tensor x = ops::stack(maps);
  for (auto& block : refine) {
    Tensor y = ops::conv2d_3x3(x, block.conv1.weight, block.conv1.bias);
    y = ops::hardswish(ops::batch_norm_2d(y, block.bn.gain, block.bn.shift, block.bn.stats, mode));
    y = ops::conv2d_3x3(y, block.conv2.weight, block.conv2.bias);
    x = ops::add(x, y);
  }
  return ops::sigmoid(ops::conv2d_3x3(x, out.weight, out.bias));
}

std::vector<NamedTensor> AtfuseModel::parameters() {
  std::vector<NamedTensor> out_list;
  push_conv(out_list, "extract.ir.conv", extract_ir.conv);
  push_norm(out_list, "extract.ir.bn", extract_ir.bn);
  push_conv(out_list, "extract.vi.conv", extract_vi.conv);
  push_norm(out_list, "extract.vi.bn", extract_vi.bn);
  push_linear(out_list, "embed.ir", embed_ir);
  push_linear(out_list, "embed.vi", embed_vi);
  for (std::size_t b = 0; b < fusion.size(); ++b) {
    const std::string prefix = "fusion." + std::to_string(b);
    if (fusion[b].diim) push_attention(out_list, prefix + ".diim", *fusion[b].diim);
    if (fusion[b].aciim_vi) push_attention(out_list, prefix + ".aciim_vi", *fusion[b].aciim_vi);
    if (fusion[b].aciim_ir) push_attention(out_list, prefix + ".aciim_ir", *fusion[b].aciim_ir);
  }
  push_linear(out_list, "up", up);
  for (std::size_t r = 0; r < refine.size(); ++r) {
    const std::string prefix = "refine." + std::to_string(r);
    push_conv(out_list, prefix + ".conv1", refine[r].conv1);
    push_norm(out_list, prefix + ".bn", refine[r].bn);
    push_conv(out_list, prefix + ".conv2", refine[r].conv2);
  }
  push_conv(out_list, "out", out);
  return out_list;
}

std::vector<std::pair<std::string, std::vector<double>*>> AtfuseModel::buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> list;
  auto add = [&](const std::string& prefix, NormParams& n) {
    list.emplace_back(prefix + ".running_mean", &n.stats.mean);
    list.emplace_back(prefix + ".running_var", &n.stats.var);
  };
  add("extract.ir.bn", extract_ir.bn);
  add("extract.vi.bn", extract_vi.bn);
  for (std::size_t r = 0; r < refine.size(); ++r) add("refine." + std::to_string(r) + ".bn", refine[r].bn);
  return list;
}

std::size_t AtfuseModel::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value.numel();
  return n;
}

void AtfuseModel::round_to_storage() {
  for (auto& p : parameters()) {
    for (auto& v : p.value.mutable_data()) v = to_storage(v);
  }
  for (auto& [name, buf] : buffers()) {
    for (auto& v : *buf) v = to_storage(v);
  }
}

std::size_t parameter_count(const ModelConfig& config) {
  const std::size_t c = config.shallow_channels, p = config.patch_size, d = config.embed_dim,
                    h = config.mlp_hidden;
  const std::size_t conv1 = 9 * c + c, bn = 2 * c;
  const std::size_t embed = c * p * p * d + d;
  const std::size_t attention = 4 * (d * d + d) + 2 * d + (d * h + h) + (h * d + d);
  std::size_t per_block = 0;
  if (config.variant != Variant::kNoDiim) per_block += attention;
  if (config.variant != Variant::kNoAciim) per_block += 2 * attention;
  const std::size_t upsample = d * c * p * p + c * p * p;
  const std::size_t refine_block = 2 * (9 * c * c + c) + bn;
  const std::size_t final_conv = 9 * c + 1;
  return 2 * (conv1 + bn) + 2 * embed + config.n_fusion_blocks * per_block + upsample +
         config.refine_blocks * refine_block + final_conv;
}

Tensor image_batch(const std::vector<const GrayImage*>& images) {
  if (images.empty()) throw DimensionError("image_batch: empty batch");
  const std::size_t h = images.front()->height, w = images.front()->width;
  std::vector<double> values;
  values.reserve(images.size() * h * w);
  for (const auto* img : images) {
    if (img->height != h || img->width != w) {
      throw DimensionError("image_batch: images differ in size");
    }
    values.insert(values.end(), img->pixels.begin(), img->pixels.end());
  }
  return Tensor::from({images.size(), 1, h, w}, std::move(values));
}

GrayImage tensor_to_image(const Tensor& t) {
  const auto& s = t.shape();
  if (s.size() < 2) throw DimensionError("tensor_to_image: need at least 2 dims");
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (t.numel() != h * w) {
    throw DimensionError("tensor_to_image: " + shape_str(s) + " is not a single image");
  }
  return GrayImage(h, w, std::vector<double>(t.data().begin(), t.data().end()));
}

GrayImage fuse_images(AtfuseModel& model, const ImagePair& pair) {
  if (!pair.ir.same_size(pair.vi)) {
    throw DimensionError("fuse_images: ir " + std::to_string(pair.ir.height) + "x" +
                         std::to_string(pair.ir.width) + " and vi " +
                         std::to_string(pair.vi.height) + "x" + std::to_string(pair.vi.width) +
                         " are not registered");
  }
  Tensor fused = model.forward(image_batch({&pair.ir}), image_batch({&pair.vi}), ops::NormMode::kEval);
  return tensor_to_image(fused);
}

}  // namespace atfuse
