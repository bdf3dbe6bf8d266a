/* Copyright 2026 The cldet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef CLDET_AD_TENSOR_HPP_
#define CLDET_AD_TENSOR_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cldet::ad {

class Tape;

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
// Row-major flat offset of a multi-index.
int64_t flat_index(const Shape& s, std::span<const int64_t> idx);

inline constexpr int64_t kNoNode = -1;

// Dense row-major tensor of 64-bit floats. Values are immutable after
// construction; the buffer is shared, so copies are cheap and snapshots of
// parameters alias until an update replaces the whole tensor. A tensor may
// additionally refer to a node on a Tape, which is how gradients find their
// way back to it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }
  int64_t numel() const;
  bool defined() const { return data_ != nullptr; }

  std::span<const double> data() const;
  const double* raw() const { return data_->data(); }
  double at(std::initializer_list<int64_t> idx) const;
  // Value of a rank-0 or single-element tensor.
  double value() const;

  bool requires_grad() const { return requires_grad_; }
  int64_t node() const { return node_; }
  Tape* tape() const { return tape_; }
  bool on_tape() const { return node_ != kNoNode; }

  // Same values, no grad flag, no tape node.
  Tensor detached() const;
  // Same values with the trainability flag set; tape association dropped.
  // The flag marks intent (parameters that should be watched when a training
  // graph is built); it does not by itself put the tensor on a tape.
  Tensor with_requires_grad(bool flag) const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

 private:
  friend class Tape;
  std::shared_ptr<const std::vector<double>> data_;
  Shape shape_;
  bool requires_grad_ = false;
  int64_t node_ = kNoNode;
  Tape* tape_ = nullptr;
};

}  // namespace cldet::ad

#endif  // CLDET_AD_TENSOR_HPP_
