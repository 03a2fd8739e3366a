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
#include <sstream>

#include "atfuse/checkpoint.hpp"
#include "atfuse/error.hpp"
#include "atfuse/synthetic.hpp"
#include "atfuse/trainer.hpp"
#include "test_util.hpp"

using namespace atfuse;

namespace {

RunConfig tiny_run(std::size_t epochs = 3) {
  RunConfig cfg;
  cfg.model.shallow_channels = 4;
  cfg.model.embed_dim = 8;
  cfg.model.mlp_hidden = 16;
  cfg.model.refine_blocks = 1;
  cfg.train.epochs = epochs;
  cfg.train.batch_size = 2;
  cfg.train.patch_size = 8;
  cfg.train.patches_per_epoch = 4;
  cfg.set_seed(11);
  return cfg;
}

std::vector<ImagePair> corpus(std::size_t n, std::size_t size, std::uint64_t seed) {
  std::vector<ImagePair> pairs;
  for (std::size_t i = 0; i < n; ++i) pairs.push_back(synthetic_pair(size, size, seed + i));
  return pairs;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  TrainConfig tc;
  CHECK(lr_at_epoch(tc, 0) == 2e-3);
  CHECK(lr_at_epoch(tc, 1) == 2e-3);
  CHECK(lr_at_epoch(tc, 50) == 2e-3);
  CHECK(lr_at_epoch(tc, 51) == 1e-3);
  CHECK(lr_at_epoch(tc, 100) == 1e-3);
  CHECK(lr_at_epoch(tc, 101) == 5e-4);
  CHECK(lr_at_epoch(tc, 201) == 2.5e-4);
  CHECK(lr_at_epoch(tc, 400) == 2.5e-4);
  CHECK(lr_at_epoch(tc, 401) == 1.25e-4);
  CHECK(lr_at_epoch(tc, 5000) == 1.25e-4);
  // Non-increasing, piecewise constant, one drop per listed epoch.
  int drops = 0;
  for (std::size_t e = 1; e <= 600; ++e) {
    const double a = lr_at_epoch(tc, e - 1), b = lr_at_epoch(tc, e);
    CHECK(b <= a);
    if (b < a) {
      ++drops;
      CHECK(b == a / 2);
    }
  }
  CHECK(drops == 4);
}

TEST_CASE("run config parsing and validation") {
  RunConfig cfg;
  cfg.apply("loss.alpha", "50");
  cfg.apply("train.lr_halving_epochs", "3,7");
  cfg.apply("model.variant", "no_aciim");
  CHECK(cfg.loss.alpha == 50.0);
  CHECK(cfg.train.lr_halving_epochs == std::vector<std::size_t>{3, 7});
  CHECK_THROWS_AS(cfg.apply("train.epoch", "3"), ConfigError);
  CHECK_THROWS_AS(cfg.apply("nonsense", "3"), ConfigError);
  CHECK_THROWS_AS(cfg.apply("train.epochs", "three"), ConfigError);

  RunConfig round;
  round.apply(cfg.to_settings());
  CHECK(round.to_settings() == cfg.to_settings());

  RunConfig bad;
  bad.train.lr_halving_epochs = {100, 50};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.train.patch_size = 30;  // not a multiple of the model patch size
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.train.initial_lr = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.train.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  RunConfig seeded;
  seeded.set_seed(42);
  CHECK(seeded.model.seed == 42);
  CHECK(seeded.train.seed == 42);
}

TEST_CASE("training log records") {
  const RunConfig cfg = tiny_run(3);
  AtfuseModel model(cfg.model);
  std::vector<TrainLogRecord> seen;
  std::vector<std::size_t> checkpoints;
  TrainHooks hooks;
  hooks.on_step = [&](const TrainLogRecord& r) { seen.push_back(r); };
  hooks.on_checkpoint = [&](std::size_t epoch, AtfuseModel&) { checkpoints.push_back(epoch); };
  const TrainResult result = train(model, corpus(2, 16, 1), cfg, hooks);
  REQUIRE(result.log.size() == 6);
  CHECK(seen.size() == 6);
  CHECK(checkpoints == std::vector<std::size_t>{3});
  CHECK(result.optimizer.step == 6);
  for (std::size_t i = 0; i < result.log.size(); ++i) {
    const auto& r = result.log[i];
    CHECK(r.step == i + 1);
    CHECK(r.epoch == i / 2 + 1);
    CHECK(r.lr == 2e-3);
    CHECK(std::fabs(r.loss.total - (r.loss.l_pixel + cfg.loss.gamma * r.loss.l_texture)) < 1e-6);
    CHECK(std::fabs(r.loss.l_pixel - (r.loss.l_part1 + r.loss.l_part2)) < 1e-6);
    if (i > 0) CHECK(r.seconds >= result.log[i - 1].seconds);
  }
  for (auto& p : model.parameters())
    for (double v : p.value.data()) CHECK(std::isfinite(v));

  std::ostringstream csv;
  write_log_header(csv);
  write_log_record(csv, result.log[0]);
  const std::string text = csv.str();
  CHECK(text.rfind("epoch,step,lr,l_part1,l_part2,l_texture,total,seconds\n1,1,0.002,", 0) == 0);
}

TEST_CASE("checkpoint cadence") {
  RunConfig cfg = tiny_run(5);
  cfg.train.checkpoint_every = 2;
  AtfuseModel model(cfg.model);
  std::vector<std::size_t> epochs;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](std::size_t e, AtfuseModel&) { epochs.push_back(e); };
  train(model, corpus(2, 16, 1), cfg, hooks);
  CHECK(epochs == std::vector<std::size_t>{2, 4, 5});
}

TEST_CASE("same seed, same parameters and logs") {
  const RunConfig cfg = tiny_run(2);
  const auto pairs = corpus(3, 16, 5);
  AtfuseModel a(cfg.model), b(cfg.model);
  const auto la = train(a, pairs, cfg).log;
  const auto lb = train(b, pairs, cfg).log;
  CHECK(parameter_checksum(a) == parameter_checksum(b));
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].loss.total == lb[i].loss.total);

  RunConfig other = cfg;
  other.set_seed(12);
  AtfuseModel c(other.model);
  train(c, pairs, other);
  CHECK(parameter_checksum(a) != parameter_checksum(c));
}

TEST_CASE("gamma = 0 logs texture but trains on the pixel loss") {
  RunConfig cfg = tiny_run(2);
  cfg.loss.gamma = 0.0;
  AtfuseModel model(cfg.model);
  for (const auto& r : train(model, corpus(2, 16, 3), cfg).log) {
    CHECK(r.loss.l_texture > 0.0);
    CHECK(r.loss.total == r.loss.l_pixel);
  }
}

TEST_CASE("loss decreases on a tiny overfit run") {
  RunConfig cfg = tiny_run(40);
  cfg.train.batch_size = 4;
  cfg.train.patch_size = 16;
  AtfuseModel model(cfg.model);
  const auto log = train(model, corpus(4, 16, 9), cfg).log;
  CHECK(log.back().loss.total < 0.8 * log.front().loss.total);
}

TEST_CASE("non-finite values abort with the step") {
  RunConfig cfg = tiny_run(3);
  cfg.train.initial_lr = 1e300;
  cfg.train.weight_decay = 0.0;
  AtfuseModel model(cfg.model);
  try {
    train(model, corpus(2, 16, 1), cfg);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("training aborted at epoch 1, step 1") != std::string::npos);
  }
}

TEST_CASE("batch loss is the mean of per-image losses") {
  const RunConfig cfg = tiny_run();
  AtfuseModel model(cfg.model);
  const auto pairs = corpus(3, 8, 2);
  const auto batch = batch_loss(model, pairs, cfg.loss, ops::NormMode::kEval);
  double mean = 0;
  for (const auto& p : pairs) {
    mean += batch_loss(model, {p}, cfg.loss, ops::NormMode::kEval).mean.total / 3;
  }
  CHECK(batch.mean.total == doctest::Approx(mean).epsilon(1e-12));
  CHECK(batch.total.item() == doctest::Approx(batch.mean.total).epsilon(1e-14));
}
