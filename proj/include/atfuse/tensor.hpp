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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace atfuse {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

// One record of the gradient tape: the value produced by an operation, the
// inputs it consumed and the adjoint rule that pushes grad back into them.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until populated
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major tensor participating in reverse-mode differentiation.
//
// Values are held in double precision. A Tensor is a cheap handle: copies
// share the same storage and tape record.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access for parameter updates; never use under an active
  // graph whose backward has not run yet.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  // Reverse pass from a scalar; seeds d(this)/d(this) = 1.
  void backward() const;

  // Same values, cut from the tape.
  Tensor detach() const;
  Tensor clone() const;

  const char* op_name() const;

  // Internal: build an op result.
  static Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of every operation reachable from a root, in creation order.
class GradTape {
 public:
  explicit GradTape(const Tensor& root);

  std::size_t size() const { return records_.size(); }
  // Runs each record's adjoint exactly once, newest first.
  void backward();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> records_;
};

// Observes the branch taken by piecewise operations (abs, max, hardswish)
// during a forward pass. Finite-difference checks use it to skip points where
// a perturbation crosses a kink.
class BranchProbe {
 public:
  BranchProbe();
  ~BranchProbe();
  BranchProbe(const BranchProbe&) = delete;
  BranchProbe& operator=(const BranchProbe&) = delete;

  std::uint64_t signature() const { return signature_; }
  // Smallest distance of any kinked input to its kink.
  double min_kink_distance() const { return min_distance_; }

  static void record(std::uint64_t branch, double distance);

 private:
  std::uint64_t signature_ = 1469598103934665603ULL;
  double min_distance_;
  BranchProbe* previous_;
};

}  // namespace atfuse
