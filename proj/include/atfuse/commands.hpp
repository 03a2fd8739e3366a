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
#include <ostream>
#include <string>
#include <vector>

#include "atfuse/metrics.hpp"
#include "atfuse/trainer.hpp"

namespace atfuse::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

// Entry point shared by the `atfuse` binary and the tests. args[0] is the
// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Defaults, then the config file (if any), then `--set` overrides, then
// `--seed`.
RunConfig resolve_config(const std::filesystem::path& config_path,
                         const std::vector<std::string>& overrides, const std::int64_t* seed);

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::filesystem::path effective_config;
  std::vector<TrainLogRecord> records;
};

TrainOutputs cmd_train(const RunConfig& cfg, const std::filesystem::path& corpus,
                       const std::filesystem::path& out_dir);

metrics::MetricReport cmd_fuse(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& ir, const std::filesystem::path& vi,
                               const std::filesystem::path& out);

std::vector<metrics::NamedReport> cmd_eval(const std::filesystem::path& fused_dir,
                                           const std::filesystem::path& ir_dir,
                                           const std::filesystem::path& vi_dir,
                                           const std::filesystem::path& csv_out);

struct AblationRow {
  std::string label;
  RunConfig config;
  metrics::MetricReport metrics;
  double final_total = 0;
};

// The configurations a variant compares, before training.
std::vector<AblationRow> ablation_grid(const std::string& variant, const RunConfig& base);

// Trains and evaluates every row; writes `<out>/<variant>/comparison.csv`.
std::vector<AblationRow> cmd_ablate(const std::string& variant, const RunConfig& base,
                                    const std::filesystem::path& corpus,
                                    const std::filesystem::path& out_dir);

}  // namespace atfuse::cli
