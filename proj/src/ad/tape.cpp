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
#include "cldet/ad/tape.hpp"

#include <stdexcept>

#include "cldet/kern/kernels.hpp"

namespace cldet::ad {

Tensor Tape::watch(const Tensor& t) {
  if (!t.defined()) throw std::invalid_argument("cannot watch an undefined tensor");
  Tensor out = t.detached();
  out.requires_grad_ = true;
  out.node_ = size();
  out.tape_ = this;
  nodes_.push_back(NodeRecord{"leaf", {}, nullptr, t.shape(), true});
  return out;
}

Tensor Tape::attach(Tensor values, std::string op, std::vector<int64_t> inputs,
                    BackwardFn fn) {
  for (int64_t in : inputs) {
    if (in < 0 || in >= size()) {
      throw std::logic_error("op '" + op + "' references node outside this tape");
    }
  }
  values.requires_grad_ = true;
  values.node_ = size();
  values.tape_ = this;
  nodes_.push_back(
      NodeRecord{std::move(op), std::move(inputs), std::move(fn), values.shape(), false});
  return values;
}

GradMap Tape::backward(const Tensor& loss) const {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_str(loss.shape()));
  }
  if (loss.tape() != this || !loss.on_tape()) {
    throw std::invalid_argument("loss is not recorded on this tape");
  }

  std::vector<Tensor> grads(nodes_.size());
  grads[static_cast<size_t>(loss.node())] = Tensor::full(loss.shape(), 1.0);

  const auto& kern = kern::active();
  for (int64_t id = loss.node(); id >= 0; --id) {
    const NodeRecord& node = nodes_[static_cast<size_t>(id)];
    Tensor& g = grads[static_cast<size_t>(id)];
    if (!g.defined() || node.leaf) continue;
    std::vector<Tensor> contrib = node.backward(g);
    if (contrib.size() != node.inputs.size()) {
      throw std::logic_error("op '" + node.op + "' returned " +
                             std::to_string(contrib.size()) + " gradients for " +
                             std::to_string(node.inputs.size()) + " inputs");
    }
    for (size_t i = 0; i < contrib.size(); ++i) {
      if (!contrib[i].defined()) continue;
      const auto in = static_cast<size_t>(node.inputs[i]);
      if (contrib[i].shape() != nodes_[in].shape) {
        throw std::logic_error("op '" + node.op + "' produced gradient of shape " +
                               shape_str(contrib[i].shape()) + " for input of shape " +
                               shape_str(nodes_[in].shape));
      }
      Tensor& slot = grads[in];
      if (!slot.defined()) {
        slot = std::move(contrib[i]);
      } else {
        std::vector<double> sum(static_cast<size_t>(slot.numel()));
        kern.add(slot.raw(), contrib[i].raw(), sum.data(), slot.numel());
        slot = Tensor(slot.shape(), std::move(sum));
      }
    }
    // Non-leaf gradients are not part of the result; free them eagerly.
    g = Tensor();
  }

  GradMap out;
  for (size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].leaf && grads[id].defined()) {
      out.emplace(static_cast<int64_t>(id), std::move(grads[id]));
    }
  }
  return out;
}

}  // namespace cldet::ad
