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

#include "atfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "atfuse/error.hpp"
#include "atfuse/losses.hpp"
#include "atfuse/model.hpp"
#include "atfuse/ops.hpp"
#include "atfuse/rng.hpp"

namespace atfuse {

std::string status_name(GradStatus s) {
  switch (s) {
    case GradStatus::kPass:
      return "pass";
    case GradStatus::kFail:
      return "FAIL";
    case GradStatus::kSkippedKink:
      return "skipped-kink";
  }
  return "FAIL";
}

bool GradCheckReport::pass() const {
  return std::none_of(groups.begin(), groups.end(),
                      [](const auto& g) { return g.status == GradStatus::kFail; });
}

GradGroupReport check_gradients(const std::string& name, const std::function<Tensor()>& objective,
                                std::vector<Tensor> inputs, const GradCheckOptions& options) {
  GradGroupReport report;
  report.name = name;
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.clear_grad();
  }
  std::uint64_t base_signature;
  Tensor base;
  {
    BranchProbe probe;
    base = objective();
    base_signature = probe.signature();
    if (probe.min_kink_distance() < options.kink_margin) {
      report.status = GradStatus::kSkippedKink;
      return report;
    }
  }
  base.backward();

  double worst = 0.0, scale = 0.0;
  for (auto& in : inputs) {
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    auto values = in.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto probe_at = [&](double x, std::uint64_t& sig) {
        values[i] = x;
        BranchProbe probe;
        const double f = objective().item();
        sig = probe.signature();
        return f;
      };
      std::uint64_t sig_plus, sig_minus;
      const double f_plus = probe_at(saved + options.step, sig_plus);
      const double f_minus = probe_at(saved - options.step, sig_minus);
      values[i] = saved;
      if (sig_plus != base_signature || sig_minus != base_signature) {
        ++report.skipped;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * options.step);
      worst = std::max(worst, std::fabs(analytic[i] - numeric));
      scale = std::max({scale, std::fabs(analytic[i]), std::fabs(numeric)});
      ++report.checked;
    }
  }
  report.max_rel_error = scale > 0 ? worst / scale : worst;
  if (report.checked == 0) {
    report.status = GradStatus::kSkippedKink;
  } else {
    report.status = report.max_rel_error < options.tolerance ? GradStatus::kPass : GradStatus::kFail;
  }
  return report;
}

GradScope parse_grad_scope(const std::string& name) {
  if (name == "all") return GradScope::kAll;
  if (name == "ops") return GradScope::kOps;
  if (name == "blocks") return GradScope::kBlocks;
  if (name == "losses") return GradScope::kLosses;
  throw ConfigError("unknown gradcheck scope '" + name + "' (all, ops, blocks, losses)");
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), true);
}

GrayImage random_image(Rng& rng, std::size_t h, std::size_t w) {
  GrayImage img(h, w);
  for (auto& p : img.pixels) p = rng.uniform(0.05, 0.95);
  return img;
}

// sum(out * weights) with fixed random weights, so every output entry
// contributes a distinct sensitivity.
Tensor weighted_sum(const Tensor& out, const Tensor& weights) {
  return ops::sum(ops::mul(out, weights));
}

Tensor constant_like(Rng& rng, const Shape& shape) {
  Tensor t = random_tensor(rng, shape);
  t.set_requires_grad(false);
  return t;
}

std::vector<Tensor> values_of(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  for (const auto& n : named) out.push_back(n.value);
  return out;
}

void append_attention(std::vector<Tensor>& out, const AttentionBlockParams& p) {
  for (const auto* l : {&p.query, &p.key, &p.value, &p.out, &p.mlp_in, &p.mlp_out}) {
    out.push_back(l->weight);
    out.push_back(l->bias);
  }
  out.push_back(p.ln_gain);
  out.push_back(p.ln_shift);
}

// Small model whose shift/bias parameters are randomized so no gradient is
// trivially zero.
ModelConfig small_config(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.shallow_channels = 4;
  cfg.patch_size = 4;
  cfg.embed_dim = 8;
  cfg.mlp_hidden = 16;
  cfg.n_fusion_blocks = 1;
  cfg.refine_blocks = 2;
  cfg.seed = seed;
  return cfg;
}

void randomize_biases(AtfuseModel& model, Rng& rng) {
  for (auto& p : model.parameters()) {
    if (p.name.ends_with(".bias") || p.name.ends_with(".shift")) {
      for (auto& v : p.value.mutable_data()) v = rng.uniform(-0.2, 0.2);
    }
  }
}

void run_ops(GradCheckReport& report, const GradCheckOptions& opt, Rng& rng) {
  auto add = [&](GradGroupReport g) { report.groups.push_back(std::move(g)); };
  {
    Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4, 2});
    add(check_gradients("matmul", [=] { return ops::sum(ops::matmul(a, b)); }, {a, b}, opt));
  }
  {
    Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {3, 4});
    Tensor w = constant_like(rng, {4, 3});
    add(check_gradients("elementwise", [=] {
          Tensor e = ops::mul(ops::add(a, ops::scale(b, 0.5)), ops::sub(a, b));
          return ops::add(weighted_sum(ops::transpose(e), w), ops::mean(ops::add_scalar(a, 2.0)));
        }, {a, b}, opt));
  }
  {
    Tensor x = random_tensor(rng, {3, 5}, -2, 2);
    Tensor w = constant_like(rng, {3, 5});
    add(check_gradients("softmax_rows", [=] { return weighted_sum(ops::softmax_rows(x), w); }, {x}, opt));
  }
  {
    Tensor x = random_tensor(rng, {1, 4, 4}), k = random_tensor(rng, {2, 1, 3, 3});
    Tensor b = random_tensor(rng, {2});
    Tensor w = constant_like(rng, {2, 4, 4});
    add(check_gradients("conv2d_3x3", [=] { return weighted_sum(ops::conv2d_3x3(x, k, b), w); },
                        {x, k, b}, opt));
  }
  {
    Tensor x = random_tensor(rng, {2, 3, 5, 4}), k = random_tensor(rng, {2, 3, 3, 3});
    Tensor b = random_tensor(rng, {2});
    Tensor w = constant_like(rng, {2, 2, 5, 4});
    add(check_gradients("conv2d_3x3_batched",
                        [=] { return weighted_sum(ops::conv2d_3x3(x, k, b), w); }, {x, k, b}, opt));
  }
  {
    Tensor x = random_tensor(rng, {2, 8}), g = random_tensor(rng, {8}), s = random_tensor(rng, {8});
    Tensor w = constant_like(rng, {2, 8});
    add(check_gradients("layer_norm", [=] { return weighted_sum(ops::layer_norm(x, g, s), w); },
                        {x, g, s}, opt));
  }
  {
    Tensor x = random_tensor(rng, {2, 3, 4, 4}), g = random_tensor(rng, {3}), s = random_tensor(rng, {3});
    Tensor w = constant_like(rng, {2, 3, 4, 4});
    auto stats = std::make_shared<ops::BatchNormStats>(3);
    add(check_gradients("batch_norm_2d", [=] {
          return weighted_sum(ops::batch_norm_2d(x, g, s, *stats, ops::NormMode::kTrainFrozen), w);
        }, {x, g, s}, opt));
    stats->mean = {0.1, -0.2, 0.3};
    stats->var = {0.5, 1.5, 2.0};
    add(check_gradients("batch_norm_2d_eval", [=] {
          return weighted_sum(ops::batch_norm_2d(x, g, s, *stats, ops::NormMode::kEval), w);
        }, {x, g, s}, opt));
  }
  {
    Tensor x = random_tensor(rng, {4, 6}, -5, 5);
    Tensor w = constant_like(rng, {4, 6});
    add(check_gradients("hardswish", [=] { return weighted_sum(ops::hardswish(x), w); }, {x}, opt));
    add(check_gradients("sigmoid", [=] { return weighted_sum(ops::sigmoid(x), w); }, {x}, opt));
    add(check_gradients("gelu", [=] { return weighted_sum(ops::gelu(x), w); }, {x}, opt));
    add(check_gradients("abs_sum", [=] { return ops::abs_sum(x); }, {x}, opt));
  }
  {
    Tensor a = random_tensor(rng, {3, 3}), b = random_tensor(rng, {3, 3});
    add(check_gradients("maximum", [=] { return ops::mean(ops::maximum(a, b)); }, {a, b}, opt));
  }
  {
    Tensor x = random_tensor(rng, {2, 4, 4});
    Tensor w = constant_like(rng, {4, 8});
    add(check_gradients("space_to_depth", [=] {
          Tensor t = ops::space_to_depth(x, 2);
          Tensor back = ops::depth_to_space(ops::mul(t, w), 2, 4, 4, 2);
          return weighted_sum(back, ops::depth_to_space(w, 2, 4, 4, 2));
        }, {x}, opt));
  }
  {
    Tensor img = random_tensor(rng, {5, 6});
    Tensor w = constant_like(rng, {5, 6});
    add(check_gradients("sobel", [=] {
          return ops::add(weighted_sum(ops::sobel_x(img), w), weighted_sum(ops::sobel_y(img), w));
        }, {img}, opt));
  }
}

void run_blocks(GradCheckReport& report, const GradCheckOptions& opt, Rng& rng) {
  auto add = [&](GradGroupReport g) { report.groups.push_back(std::move(g)); };
  const std::size_t s_side = 2, d = 8;
  {
    auto model = std::make_shared<AtfuseModel>(small_config(opt.seed));
    randomize_biases(*model, rng);
    Tensor images = random_tensor(rng, {2, 1, 8, 8}, 0, 1);
    Tensor w = constant_like(rng, {2, 4, 8, 8});
    auto& ex = model->extract_ir;
    add(check_gradients("shallow_extract", [=] {
          return weighted_sum(shallow_extract(images, model->extract_ir, ops::NormMode::kTrainFrozen), w);
        }, {images, ex.conv.weight, ex.conv.bias, ex.bn.gain, ex.bn.shift}, opt));
  }
  auto model = std::make_shared<AtfuseModel>(small_config(opt.seed + 1));
  randomize_biases(*model, rng);
  const auto& block = model->fusion.front();
  Tensor ir_tokens = random_tensor(rng, {s_side * s_side, d});
  Tensor vi_tokens = random_tensor(rng, {s_side * s_side, d});
  Tensor w = constant_like(rng, {s_side * s_side, d});
  const TokenGrid ir{ir_tokens, s_side, s_side};
  const TokenGrid vi{vi_tokens, s_side, s_side};
  {
    std::vector<Tensor> inputs{ir_tokens, vi_tokens};
    append_attention(inputs, *block.diim);
    add(check_gradients("diim", [=] {
          return weighted_sum(diim_forward(vi, ir, *model->fusion.front().diim).tokens, w);
        }, inputs, opt));
  }
  {
    std::vector<Tensor> inputs{ir_tokens, vi_tokens};
    append_attention(inputs, *block.aciim_vi);
    add(check_gradients("aciim", [=] {
          return weighted_sum(aciim_forward(vi, ir, *model->fusion.front().aciim_vi).tokens, w);
        }, inputs, opt));
  }
  {
    std::vector<Tensor> inputs{ir_tokens, vi_tokens};
    append_attention(inputs, *block.diim);
    append_attention(inputs, *block.aciim_vi);
    append_attention(inputs, *block.aciim_ir);
    add(check_gradients("feature_fusion", [=] {
          return weighted_sum(feature_fusion(ir, vi, model->fusion, Variant::kFull).tokens, w);
        }, inputs, opt));
  }
  {
    Tensor fused_tokens = random_tensor(rng, {s_side * s_side, d});
    Tensor out_w = constant_like(rng, {1, 1, 8, 8});
    std::vector<Tensor> inputs{fused_tokens, model->up.weight, model->up.bias};
    for (auto& r : model->refine) {
      for (const auto& t : {r.conv1.weight, r.conv1.bias, r.bn.gain, r.bn.shift, r.conv2.weight,
                            r.conv2.bias}) {
        inputs.push_back(t);
      }
    }
    inputs.push_back(model->out.weight);
    inputs.push_back(model->out.bias);
    add(check_gradients("reconstruct", [=] {
          return weighted_sum(
              model->reconstruct({{fused_tokens, s_side, s_side}}, 8, 8, ops::NormMode::kTrainFrozen),
              out_w);
        }, inputs, opt));
  }
  {
    auto e2e = std::make_shared<AtfuseModel>(small_config(opt.seed + 2));
    randomize_biases(*e2e, rng);
    const GrayImage ir_img = random_image(rng, 8, 8), vi_img = random_image(rng, 8, 8);
    const Tensor ir_b = image_batch({&ir_img}), vi_b = image_batch({&vi_img});
    add(check_gradients("end_to_end", [=] {
          Tensor fused = e2e->forward(ir_b, vi_b, ops::NormMode::kTrainFrozen);
          return total_loss(ops::reshape(fused, {8, 8}), ir_img, vi_img, LossConfig{}).total;
        }, values_of(e2e->parameters()), opt));
  }
}

void run_losses(GradCheckReport& report, const GradCheckOptions& opt, Rng& rng) {
  auto add = [&](GradGroupReport g) { report.groups.push_back(std::move(g)); };
  const GrayImage ir = random_image(rng, 8, 8), vi = random_image(rng, 8, 8);
  Tensor fused = random_tensor(rng, {8, 8}, 0.05, 0.95);
  add(check_gradients("texture_loss", [=] { return texture_loss(fused, ir, vi); }, {fused}, opt));
  const PartitionMasks masks = partition_masks(ir, vi, 20.0);
  add(check_gradients("segmented_pixel_loss",
                      [=] { return segmented_pixel_loss(fused, ir, vi, masks).pixel; }, {fused}, opt));
  add(check_gradients("total_loss", [=] { return total_loss(fused, ir, vi, LossConfig{}).total; },
                      {fused}, opt));
}

}  // namespace

GradCheckReport grad_check(GradScope scope, const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;
  Rng rng(options.seed);
  if (scope == GradScope::kAll || scope == GradScope::kOps) run_ops(report, options, rng);
  if (scope == GradScope::kAll || scope == GradScope::kBlocks) run_blocks(report, options, rng);
  if (scope == GradScope::kAll || scope == GradScope::kLosses) run_losses(report, options, rng);
  return report;
}

}  // namespace atfuse
