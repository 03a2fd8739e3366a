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
#include <functional>
#include <ostream>
#include <vector>

#include "atfuse/image.hpp"
#include "atfuse/losses.hpp"
#include "atfuse/model.hpp"
#include "atfuse/optim.hpp"

namespace atfuse {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double initial_lr = 2e-3;
  std::vector<std::size_t> lr_halving_epochs{50, 100, 200, 400};
  std::size_t patch_size = 32;
  std::size_t patches_per_epoch = 64;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint
  double weight_decay = 1e-2;
  double grad_clip = 0.0;  // global L2 norm; 0 disables

  void validate() const;
  Settings to_settings() const;
  bool apply(const std::string& key, const std::string& value);
};

// Everything a run needs, as read from a `section.key = value` file.
struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;

  void validate() const;
  Settings to_settings() const;
  // Throws ConfigError for unknown keys.
  void apply(const std::string& key, const std::string& value);
  void apply(const Settings& settings);
  // Sets both the model-initialization and the sampling seed.
  void set_seed(std::uint64_t seed);
};

struct TrainLogRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0;
  LossBreakdown loss;
  double seconds = 0;
};

// Halving takes effect once the listed epoch has completed: with epochs
// numbered from 1 and halving at 50, epochs 1..50 use the initial rate and
// epoch 51 the halved one.
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct TrainHooks {
  std::function<void(const TrainLogRecord&)> on_step;
  std::function<void(std::size_t epoch, AtfuseModel&)> on_checkpoint;
};

struct TrainResult {
  std::vector<TrainLogRecord> log;
  AdamWState optimizer;
};

// Mean of the per-image losses over a batch, as trained on.
struct BatchLoss {
  Tensor total;
  LossBreakdown mean;
};

BatchLoss batch_loss(AtfuseModel& model, const std::vector<ImagePair>& batch,
                     const LossConfig& loss, ops::NormMode mode);

// Unsupervised training on random patches of `pairs`. Throws NumericError
// naming the epoch and step if a loss or gradient becomes non-finite.
TrainResult train(AtfuseModel& model, const std::vector<ImagePair>& pairs, const RunConfig& cfg,
                  const TrainHooks& hooks = {});

void write_log_header(std::ostream& out);
void write_log_record(std::ostream& out, const TrainLogRecord& r);

}  // namespace atfuse
