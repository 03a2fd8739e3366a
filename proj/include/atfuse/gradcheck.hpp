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
#include <string>
#include <vector>

#include "atfuse/tensor.hpp"

namespace atfuse {

enum class GradStatus { kPass, kFail, kSkippedKink };

std::string status_name(GradStatus s);

struct GradGroupReport {
  std::string name;
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // entries whose +-h probes land on different branches
  GradStatus status = GradStatus::kPass;
};

struct GradCheckReport {
  double tolerance = 1e-4;
  std::vector<GradGroupReport> groups;

  bool pass() const;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-3;         // central-difference half width
  double kink_margin = 1e-6;  // base points closer than this to a kink are not checked
  std::uint64_t seed = 7;
};

// Compares backward() of a scalar objective against central differences for
// every entry of `inputs`. The error of a group is
//   max_i |analytic_i - numeric_i| / max_i max(|analytic_i|, |numeric_i|),
// i.e. relative to the group's largest gradient entry.
GradGroupReport check_gradients(const std::string& name, const std::function<Tensor()>& objective,
                                std::vector<Tensor> inputs, const GradCheckOptions& options);

enum class GradScope { kAll, kOps, kBlocks, kLosses };

GradScope parse_grad_scope(const std::string& name);

// Built-in suite on small random instances (s <= 8, d <= 8, 8x8 images).
GradCheckReport grad_check(GradScope scope, const GradCheckOptions& options = {});

}  // namespace atfuse
