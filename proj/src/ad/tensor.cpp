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
#include "cldet/ad/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cldet::ad {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d <= 0) throw std::invalid_argument("non-positive dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

int64_t flat_index(const Shape& s, std::span<const int64_t> idx) {
  if (idx.size() != s.size()) {
    throw std::invalid_argument("index rank mismatch for shape " + shape_str(s));
  }
  int64_t off = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= s[i]) {
      throw std::out_of_range("index out of range for shape " + shape_str(s));
    }
    off = off * s[i] + idx[i];
  }
  return off;
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  const int64_t n = shape_numel(shape_);
  if (n != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape_));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) {
  const int64_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  const int64_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

int64_t Tensor::numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

std::span<const double> Tensor::data() const {
  if (!data_) throw std::runtime_error("access to undefined tensor");
  return {data_->data(), data_->size()};
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  std::vector<int64_t> v(idx);
  return (*data_)[static_cast<size_t>(flat_index(shape_, v))];
}

double Tensor::value() const {
  if (numel() != 1) {
    throw std::invalid_argument("value() requires a single-element tensor, got shape " +
                                shape_str(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t;
  t.data_ = data_;
  t.shape_ = shape_;
  return t;
}

Tensor Tensor::with_requires_grad(bool flag) const {
  Tensor t = detached();
  t.requires_grad_ = flag;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace cldet::ad
