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

#include "atfuse/optim.hpp"

#include <cmath>

#include "atfuse/error.hpp"

namespace atfuse {

void adamw_step(std::vector<NamedTensor>& params, AdamWState& state) {
  for (const auto& p : params) {
    if (!p.value.has_grad()) throw Error("adamw_step: parameter '" + p.name + "' has no grad");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  for (auto& p : params) {
    auto values = p.value.mutable_data();
    auto grad = p.value.grad();
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    if (m.size() != values.size()) {
      m.assign(values.size(), 0.0);
      v.assign(values.size(), 0.0);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] -= state.learning_rate * state.weight_decay * values[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      values[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace atfuse
