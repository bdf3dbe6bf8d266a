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
#ifndef CLDET_EVAL_LEDGER_HPP_
#define CLDET_EVAL_LEDGER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cldet/cl/strategy.hpp"
#include "cldet/det/detector.hpp"

namespace cldet::eval {

// MACs of one convolution: batch * Cout * Hout * Wout * Cin * kh * kw.
int64_t conv_macs(int64_t batch, int64_t cout, int64_t hout, int64_t wout, int64_t cin,
                  int64_t kh, int64_t kw);

struct LayerCost {
  std::string name;
  int64_t block = 0;  // freeze-boundary block index, heads last
  int64_t params = 0;
  int64_t macs = 0;  // single-image forward
};

// Per-convolution shape arithmetic for the whole network.
std::vector<LayerCost> layer_costs(const det::DetectorSpec& spec);

// Forward MACs below/at the boundary (lower) and above it (upper), batch 1.
struct MacSplit {
  int64_t lower = 0;
  int64_t upper = 0;
};
MacSplit split_macs(const det::DetectorSpec& spec, const std::string& boundary);

struct CostLedger {
  int64_t total_params = 0;
  int64_t trainable_params = 0;
  // Extra parameters the strategy stores beyond one deployable model:
  // a full teacher for classic distillation, upper layers only when the
  // teacher shares the frozen lower layers, zero otherwise.
  int64_t cl_overhead_params = 0;
  // Single-example training-step costs under the strategy's forward scheme.
  int64_t forward_macs_update = 0;
  int64_t backward_macs_update = 0;  // 2x forward MACs of trainable layers
  int64_t buffer_bytes = 0;
};

CostLedger cost_ledger(const det::DetectorSpec& spec, const std::string& freeze_boundary,
                       cl::StrategyKind kind, const cl::ReplayBuffer* buffer = nullptr);

// Fraction of distillation parameter overhead removed by sharing the lower
// layers: 1 - upper/total.
double distill_overhead_reduction(int64_t total_params, int64_t upper_params);

// Rehearsal-memory formulas, usable for configurations beyond the toy net.
int64_t raw_buffer_bytes(int64_t entries, int64_t height, int64_t width);
int64_t latent_buffer_bytes(int64_t entries, int64_t activation_numel);

}  // namespace cldet::eval

#endif  // CLDET_EVAL_LEDGER_HPP_
