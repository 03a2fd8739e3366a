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

#include "atfuse/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "atfuse/error.hpp"

namespace atfuse {
namespace {

std::atomic<std::uint64_t> g_next_seq{1};

thread_local BranchProbe* t_probe = nullptr;

void check_finite(const char* op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  check_finite("tensor construction", values);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = g_next_seq.fetch_add(1);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= node_->shape.size()) {
    throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_str(node_->shape));
  }
  return node_->shape[i];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }
void Tensor::clear_grad() { node_->grad.clear(); }

void Tensor::backward() const {
  GradTape tape(*this);
  tape.backward();
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  node->seq = g_next_seq.fetch_add(1);
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.set_requires_grad(requires_grad());
  return t;
}

const char* Tensor::op_name() const { return node_->op; }

Tensor Tensor::make_result(const char* op, Shape shape, std::vector<double> data,
                           std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward) {
  check_finite(op, data);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  node->seq = g_next_seq.fetch_add(1);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

GradTape::GradTape(const Tensor& root) : root_(root.node()) {
  if (!root_->requires_grad) return;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{root_.get()};
  std::vector<std::shared_ptr<detail::Node>> found{root_};
  seen.insert(root_.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) {
        found.push_back(in);
        stack.push_back(in.get());
      }
    }
  }
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  records_ = std::move(found);
}

void GradTape::backward() {
  if (!root_->requires_grad) {
    throw Error("backward() on a tensor that does not require grad");
  }
  if (root_->data.size() != 1) {
    throw DimensionError("backward() needs a scalar root, got " + shape_str(root_->shape));
  }
  for (auto& n : records_) n->ensure_grad();
  root_->grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    detail::Node& n = **it;
    if (n.backward) n.backward(n);
  }
}

BranchProbe::BranchProbe()
    : min_distance_(std::numeric_limits<double>::infinity()), previous_(t_probe) {
  t_probe = this;
}

BranchProbe::~BranchProbe() { t_probe = previous_; }

void BranchProbe::record(std::uint64_t branch, double distance) {
  BranchProbe* p = t_probe;
  if (p == nullptr) return;
  p->signature_ = (p->signature_ ^ (branch + 1)) * 1099511628211ULL;
  p->min_distance_ = std::min(p->min_distance_, distance);
}

}  // namespace atfuse
