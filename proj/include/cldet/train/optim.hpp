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
#ifndef CLDET_TRAIN_OPTIM_HPP_
#define CLDET_TRAIN_OPTIM_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cldet/ad/tape.hpp"
#include "cldet/ad/tensor.hpp"
#include "cldet/det/detector.hpp"

namespace cldet::train {

struct Hyperparams {
  double base_lr = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t warmup_steps = 50;
  int64_t epochs_per_task = 30;
  int64_t t_max = 30;  // cosine horizon, == epochs_per_task by default
  int64_t batch_size = 16;

  void validate() const;
};

// Linear warmup over global steps, then cosine annealing over epochs:
//   step < warmup : base * (step + 1) / warmup
//   otherwise     : base * (1 + cos(pi * epoch / t_max)) / 2
double lr_at(int64_t step, int64_t epoch, const Hyperparams& hp);

// First/second moments keyed by parameter name; entries exist only for
// trainable parameters. `step` counts completed updates.
struct AdamWState {
  int64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

AdamWState make_optimizer_state(const det::Detector& model);

// One decoupled-weight-decay Adam update:
//   p <- p - lr * mhat / (sqrt(vhat) + eps) - lr * weight_decay * p
// `bound` is the bind_params map whose node ids key `grads`. Parameters
// without a gradient entry step with g = 0 (decay still applies). Updated
// parameters replace the old tensors, so teacher snapshots that share the
// previous storage are never disturbed. Throws on non-finite gradients,
// naming the offending parameter.
void adamw_step(det::Detector& model, const std::map<std::string, ad::Tensor>& bound,
                const ad::GradMap& grads, AdamWState& state, double lr,
                const Hyperparams& hp);

}  // namespace cldet::train

#endif  // CLDET_TRAIN_OPTIM_HPP_
