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

#include "atfuse/trainer.hpp"

#include <chrono>
#include <cmath>

#include "atfuse/error.hpp"
#include "atfuse/ops.hpp"

namespace atfuse {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0 || patch_size == 0 || patches_per_epoch == 0) {
    throw ConfigError("train counts must be positive");
  }
  if (!(initial_lr > 0)) throw ConfigError("train.initial_lr must be positive");
  for (std::size_t i = 1; i < lr_halving_epochs.size(); ++i) {
    if (lr_halving_epochs[i] <= lr_halving_epochs[i - 1]) {
      throw ConfigError("train.lr_halving_epochs must be strictly increasing");
    }
  }
  if (weight_decay < 0 || grad_clip < 0) throw ConfigError("train.weight_decay/grad_clip must be >= 0");
}

Settings TrainConfig::to_settings() const {
  using setting::format_double;
  return {
      {"train.epochs", std::to_string(epochs)},
      {"train.batch_size", std::to_string(batch_size)},
      {"train.initial_lr", format_double(initial_lr)},
      {"train.lr_halving_epochs", setting::format_size_list(lr_halving_epochs)},
      {"train.patch_size", std::to_string(patch_size)},
      {"train.patches_per_epoch", std::to_string(patches_per_epoch)},
      {"train.seed", std::to_string(seed)},
      {"train.checkpoint_every", std::to_string(checkpoint_every)},
      {"train.weight_decay", format_double(weight_decay)},
      {"train.grad_clip", format_double(grad_clip)},
  };
}

bool TrainConfig::apply(const std::string& key, const std::string& value) {
  if (key == "train.epochs") epochs = setting::to_size(key, value);
  else if (key == "train.batch_size") batch_size = setting::to_size(key, value);
  else if (key == "train.initial_lr") initial_lr = setting::to_double(key, value);
  else if (key == "train.lr_halving_epochs") lr_halving_epochs = setting::to_size_list(key, value);
  else if (key == "train.patch_size") patch_size = setting::to_size(key, value);
  else if (key == "train.patches_per_epoch") patches_per_epoch = setting::to_size(key, value);
  else if (key == "train.seed") seed = setting::to_u64(key, value);
  else if (key == "train.checkpoint_every") checkpoint_every = setting::to_size(key, value);
  else if (key == "train.weight_decay") weight_decay = setting::to_double(key, value);
  else if (key == "train.grad_clip") grad_clip = setting::to_double(key, value);
  else return false;
  return true;
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  train.validate();
  if (train.patch_size % model.patch_size != 0) {
    throw ConfigError("train.patch_size " + std::to_string(train.patch_size) +
                      " must be a multiple of model.patch_size " + std::to_string(model.patch_size));
  }
  if (train.patch_size < 3) throw ConfigError("train.patch_size must be at least 3");
}

Settings RunConfig::to_settings() const {
  Settings all = model.to_settings();
  all.merge(loss.to_settings());
  all.merge(train.to_settings());
  return all;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (model.apply(key, value) || loss.apply(key, value) || train.apply(key, value)) return;
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::apply(const Settings& settings) {
  for (const auto& [k, v] : settings) apply(k, v);
}

void RunConfig::set_seed(std::uint64_t seed) {
  model.seed = seed;
  train.seed = seed;
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.initial_lr;
  for (std::size_t boundary : cfg.lr_halving_epochs) {
    if (epoch > boundary) lr *= 0.5;
  }
  return lr;
}

BatchLoss batch_loss(AtfuseModel& model, const std::vector<ImagePair>& batch,
                     const LossConfig& loss, ops::NormMode mode) {
  std::vector<const GrayImage*> irs, vis;
  for (const auto& p : batch) {
    irs.push_back(&p.ir);
    vis.push_back(&p.vi);
  }
  const Tensor fused = model.forward(image_batch(irs), image_batch(vis), mode);
  std::vector<Tensor> totals;
  BatchLoss out;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& p = batch[n];
    Tensor img = ops::reshape(ops::batch_item(fused, n), {p.ir.height, p.ir.width});
    LossTerms terms = total_loss(img, p.ir, p.vi, loss);
    const LossBreakdown b = terms.values();
    out.mean.l_part1 += b.l_part1 * inv_n;
    out.mean.l_part2 += b.l_part2 * inv_n;
    out.mean.l_pixel += b.l_pixel * inv_n;
    out.mean.l_texture += b.l_texture * inv_n;
    out.mean.total += b.total * inv_n;
    totals.push_back(terms.total);
  }
  out.total = ops::scale(ops::sum(ops::stack(totals)), inv_n);
  return out;
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (epoch + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void clip_gradients(std::vector<NamedTensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.value.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double k = max_norm / norm;
  for (auto& p : params) {
    auto& grad = p.value.node()->grad;
    for (auto& g : grad) g *= k;
  }
}

}  // namespace

TrainResult train(AtfuseModel& model, const std::vector<ImagePair>& pairs, const RunConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (model.config().patch_size != cfg.model.patch_size) {
    throw ConfigError("model patch size differs from the run config");
  }
  if (pairs.empty()) throw Error("train: corpus is empty");
  const TrainConfig& tc = cfg.train;
  TrainResult result;
  result.optimizer.weight_decay = tc.weight_decay;
  auto params = model.parameters();
  const auto start = std::chrono::steady_clock::now();
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    result.optimizer.learning_rate = lr_at_epoch(tc, epoch);
    const PatchSet patches =
        random_patches(pairs, tc.patch_size, tc.patches_per_epoch, epoch_seed(tc.seed, epoch));
    for (std::size_t first = 0; first < patches.patches.size(); first += tc.batch_size) {
      ++step;
      const std::size_t last = std::min(first + tc.batch_size, patches.patches.size());
      const std::vector<ImagePair> batch(patches.patches.begin() + first,
                                         patches.patches.begin() + last);
      for (auto& p : params) p.value.zero_grad();
      BatchLoss loss;
      try {
        loss = batch_loss(model, batch, cfg.loss, ops::NormMode::kTrain);
        loss.total.backward();
        for (const auto& p : params) {
          for (double g : p.value.grad()) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p.name);
          }
        }
        if (tc.grad_clip > 0) clip_gradients(params, tc.grad_clip);
        adamw_step(params, result.optimizer);
        model.round_to_storage();
        for (const auto& p : params) {
          for (double v : p.value.data()) {
            if (!std::isfinite(v)) throw NumericError("non-finite parameter " + p.name);
          }
        }
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + ": " + e.what());
      }
      TrainLogRecord record;
      record.epoch = epoch;
      record.step = step;
      record.lr = result.optimizer.learning_rate;
      record.loss = loss.mean;
      record.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.log.push_back(record);
      if (hooks.on_step) hooks.on_step(record);
    }
    const bool cadence = tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0;
    if (hooks.on_checkpoint && (cadence || epoch == tc.epochs)) hooks.on_checkpoint(epoch, model);
  }
  return result;
}

void write_log_header(std::ostream& out) {
  out << "epoch,step,lr,l_part1,l_part2,l_texture,total,seconds\n";
}

void write_log_record(std::ostream& out, const TrainLogRecord& r) {
  using setting::format_double;
  out << r.epoch << ',' << r.step << ',' << format_double(r.lr) << ','
      << format_double(r.loss.l_part1) << ',' << format_double(r.loss.l_part2) << ','
      << format_double(r.loss.l_texture) << ',' << format_double(r.loss.total) << ','
      << format_double(r.seconds) << '\n';
}

}  // namespace atfuse
