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
#ifndef CLDET_AD_TAPE_HPP_
#define CLDET_AD_TAPE_HPP_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cldet/ad/tensor.hpp"

namespace cldet::ad {

// Gradients of watched leaves, keyed by node id. Ordered map so iteration is
// deterministic.
using GradMap = std::map<int64_t, Tensor>;

// Returns one gradient per recorded input, in input order, given the
// gradient w.r.t. the node's output.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

// Append-only record of differentiable operations. Nodes are topologically
// ordered by construction (an op can only consume tensors that already
// exist), so reverse iteration is a valid reverse-mode sweep. backward() is
// const and may be called repeatedly; it always yields the same gradients.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `t` as a differentiable leaf and returns the watched handle.
  Tensor watch(const Tensor& t);

  // Reverse accumulation from a scalar loss recorded on this tape.
  // The result maps watched-leaf node ids to gradients of identical shape;
  // leaves the loss does not reach are absent. Non-leaf gradients are
  // discarded.
  GradMap backward(const Tensor& loss) const;

  int64_t size() const { return static_cast<int64_t>(nodes_.size()); }

  // Used by the op layer: wraps freshly computed output values in a tensor
  // attached to a new node. `inputs` are node ids of the differentiable
  // inputs; `fn` produces their gradient contributions.
  Tensor attach(Tensor values, std::string op, std::vector<int64_t> inputs,
                BackwardFn fn);

  const std::string& op_name(int64_t node) const { return nodes_[static_cast<size_t>(node)].op; }

 private:
  struct NodeRecord {
    std::string op;
    std::vector<int64_t> inputs;
    BackwardFn backward;  // empty for leaves
    Shape shape;
    bool leaf = false;
  };
  std::vector<NodeRecord> nodes_;
};

}  // namespace cldet::ad

#endif  // CLDET_AD_TAPE_HPP_
