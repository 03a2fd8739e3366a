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
#include <map>
#include <string>
#include <vector>

#include "atfuse/tensor.hpp"

namespace atfuse {

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct AdamWState {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  std::int64_t step = 0;
  // First and second moments keyed by parameter name, zero-initialized on
  // first use.
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// One AdamW update of every parameter from its populated grad. Weight decay
// is decoupled: p -= lr * wd * p before the moment-based step.
void adamw_step(std::vector<NamedTensor>& params, AdamWState& state);

}  // namespace atfuse
