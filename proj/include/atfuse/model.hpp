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
#include <optional>
#include <string>
#include <vector>

#include "atfuse/config.hpp"
#include "atfuse/image.hpp"
#include "atfuse/ops.hpp"
#include "atfuse/optim.hpp"
#include "atfuse/tensor.hpp"

namespace atfuse {

// Structural variants used by the network ablations.
enum class Variant {
  kFull,
  kNoDiim,   // no discrepancy module; the common-information chain starts from visible tokens
  kNoAciim,  // no common-information modules; fused grid is the discrepancy output
};

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  std::size_t shallow_channels = 16;
  std::size_t patch_size = 4;
  std::size_t embed_dim = 32;
  std::size_t mlp_hidden = 64;
  std::size_t n_fusion_blocks = 1;
  std::size_t refine_blocks = 2;
  std::uint64_t seed = 0;
  Variant variant = Variant::kFull;

  void validate() const;
  // Keys under the `model.` prefix.
  Settings to_settings() const;
  static ModelConfig from_settings(const Settings& settings);
  // Returns false when `key` is not a model key.
  bool apply(const std::string& key, const std::string& value);

  bool operator==(const ModelConfig&) const = default;
};

// Patch-embedded feature sequence; token t covers patch (t / w, t % w).
struct TokenGrid {
  Tensor tokens;  // [s x d], s = h * w
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const { return h * w; }
};

struct LinearParams {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

struct ConvParams {
  Tensor weight;  // [out x in x 3 x 3]
  Tensor bias;    // [out]
};

struct NormParams {
  Tensor gain;
  Tensor shift;
  ops::BatchNormStats stats;
};

struct AttentionBlockParams {
  LinearParams query;
  LinearParams key;
  LinearParams value;
  LinearParams out;  // applied to the injected information
  Tensor ln_gain;
  Tensor ln_shift;
  LinearParams mlp_in;
  LinearParams mlp_out;
};

struct FusionBlockParams {
  std::optional<AttentionBlockParams> diim;
  std::optional<AttentionBlockParams> aciim_vi;
  std::optional<AttentionBlockParams> aciim_ir;
};

struct ExtractorParams {
  ConvParams conv;
  NormParams bn;
};

struct RefineBlockParams {
  ConvParams conv1;
  NormParams bn;
  ConvParams conv2;
};

// Intermediate values of one attention block.
struct AttentionTrace {
  Tensor attention;  // softmax(QK^T / sqrt(d)), [s x s]
  Tensor common;     // attention * V
  Tensor injected;   // projected discrepancy or common information
  Tensor f_add;
};

struct FusionBlockTrace {
  TokenGrid z1;
  TokenGrid z2;
  TokenGrid z3;
  TokenGrid output;
  AttentionTrace diim;
  AttentionTrace aciim_vi;
  AttentionTrace aciim_ir;
};

struct FusionTrace {
  std::vector<FusionBlockTrace> blocks;
};

// What an attention block injects into the query stream.
enum class Injection {
  kDiscrepancy,  // Linear(V - CM)
  kCommon,       // Linear(CM)
};

// out = MLP(LN(F_add)) + F_add with F_add = injected + Q.
// Q comes from `query`, K and V from `source`.
TokenGrid attention_block(const TokenGrid& query, const TokenGrid& source,
                          const AttentionBlockParams& params, Injection injection,
                          AttentionTrace* trace = nullptr);

// Q from visible tokens, K/V from infrared tokens.
TokenGrid diim_forward(const TokenGrid& query, const TokenGrid& source,
                       const AttentionBlockParams& params, AttentionTrace* trace = nullptr);
// Q from the running fused tokens, K/V from the injected modality.
TokenGrid aciim_forward(const TokenGrid& source, const TokenGrid& query,
                        const AttentionBlockParams& params, AttentionTrace* trace = nullptr);

// Z1 = DIIM(ir, vi); Z2 = ACIIM(vi, Z1); Z3 = ACIIM(ir, Z2); out = Z3 + Z1.
// Later blocks use the running fused grid in place of the visible query.
TokenGrid feature_fusion(const TokenGrid& ir, const TokenGrid& vi,
                         const std::vector<FusionBlockParams>& blocks, Variant variant,
                         FusionTrace* trace = nullptr);

// conv3x3 -> batch norm -> hardswish on [N x 1 x H x W].
Tensor shallow_extract(const Tensor& images, ExtractorParams& params, ops::NormMode mode);

TokenGrid patch_embed(const Tensor& features, std::size_t patch_size, const LinearParams& embed);
// Inverse layout of patch_embed through `up` (d -> C*p*p) and depth-to-space.
Tensor patch_unembed(const TokenGrid& grid, std::size_t channels, std::size_t patch_size,
                     const LinearParams& up);

class AtfuseModel {
 public:
  explicit AtfuseModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // ir and vi are [N x 1 x H x W]; returns the fused batch, same shape.
  // When `traces` is given it receives one FusionTrace per batch item.
  Tensor forward(const Tensor& ir, const Tensor& vi, ops::NormMode mode,
                 std::vector<FusionTrace>* traces = nullptr);

  // Upsampling and residual refinement of fused grids back to [N x 1 x H x W].
  Tensor reconstruct(const std::vector<TokenGrid>& fused, std::size_t height, std::size_t width,
                     ops::NormMode mode);

  // Trainable tensors in a fixed order with stable dotted names.
  std::vector<NamedTensor> parameters();
  // Batch-norm running statistics, keyed like parameters.
  std::vector<std::pair<std::string, std::vector<double>*>> buffers();
  std::size_t parameter_count();

  // Round every parameter and buffer to the nearest 32-bit float.
  void round_to_storage();

  ExtractorParams extract_ir;
  ExtractorParams extract_vi;
  LinearParams embed_ir;
  LinearParams embed_vi;
  std::vector<FusionBlockParams> fusion;
  LinearParams up;
  std::vector<RefineBlockParams> refine;
  ConvParams out;

 private:
  ModelConfig config_;
};

std::size_t parameter_count(const ModelConfig& config);

Tensor image_batch(const std::vector<const GrayImage*>& images);
GrayImage tensor_to_image(const Tensor& t);

// Eval-mode fusion of one registered pair.
GrayImage fuse_images(AtfuseModel& model, const ImagePair& pair);

}  // namespace atfuse
