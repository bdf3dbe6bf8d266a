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
#include "cldet/eval/ledger.hpp"

#include <stdexcept>

namespace cldet::eval {

int64_t conv_macs(int64_t batch, int64_t cout, int64_t hout, int64_t wout, int64_t cin,
                  int64_t kh, int64_t kw) {
  if (batch < 1 || cout < 1 || hout < 1 || wout < 1 || cin < 1 || kh < 1 || kw < 1) {
    throw std::invalid_argument("conv_macs needs positive dimensions");
  }
  return batch * cout * hout * wout * cin * kh * kw;
}

std::vector<LayerCost> layer_costs(const det::DetectorSpec& spec) {
  spec.validate();
  std::vector<LayerCost> layers;
  int64_t size = spec.input_size;
  int64_t cin = spec.in_channels;
  int64_t block = 1;
  for (const det::StageSpec& stage : spec.stages) {
    int conv_no = 1;
    for (const det::ConvSpec& conv : stage.convs) {
      size /= conv.stride;
      layers.push_back(LayerCost{
          stage.name + ".conv" + std::to_string(conv_no), block,
          conv.out_channels * (cin * 9 + 1),
          conv_macs(1, conv.out_channels, size, size, cin, 3, 3)});
      cin = conv.out_channels;
      ++conv_no;
    }
    ++block;
  }
  int conv_no = 1;
  for (int64_t channels : spec.trunk_channels) {
    layers.push_back(LayerCost{"trunk.conv" + std::to_string(conv_no), block,
                               channels * (cin * 9 + 1),
                               conv_macs(1, channels, size, size, cin, 3, 3)});
    cin = channels;
    ++conv_no;
  }
  ++block;
  layers.push_back(LayerCost{"head.cls", block, spec.num_classes * (cin * 9 + 1),
                             conv_macs(1, spec.num_classes, size, size, cin, 3, 3)});
  layers.push_back(LayerCost{"head.box", block, 4 * (cin * 9 + 1),
                             conv_macs(1, 4, size, size, cin, 3, 3)});
  return layers;
}

MacSplit split_macs(const det::DetectorSpec& spec, const std::string& boundary) {
  const int64_t idx = spec.boundary_index(boundary);
  MacSplit split;
  for (const LayerCost& layer : layer_costs(spec)) {
    (layer.block <= idx ? split.lower : split.upper) += layer.macs;
  }
  return split;
}

CostLedger cost_ledger(const det::DetectorSpec& spec, const std::string& freeze_boundary,
                       cl::StrategyKind kind, const cl::ReplayBuffer* buffer) {
  const int64_t idx = spec.boundary_index(freeze_boundary);
  CostLedger ledger;
  int64_t lower_macs = 0, upper_macs = 0, upper_params = 0;
  for (const LayerCost& layer : layer_costs(spec)) {
    ledger.total_params += layer.params;
    if (layer.block > idx) {
      ledger.trainable_params += layer.params;
      upper_params += layer.params;
      upper_macs += layer.macs;
    } else {
      lower_macs += layer.macs;
    }
  }

  const int64_t one_pass = lower_macs + upper_macs;
  switch (kind) {
    case cl::StrategyKind::kLwf:
    case cl::StrategyKind::kSid:
      ledger.forward_macs_update = 2 * one_pass;
      ledger.cl_overhead_params = ledger.total_params;
      break;
    case cl::StrategyKind::kLatentDistill:
      ledger.forward_macs_update = lower_macs + 2 * upper_macs;
      ledger.cl_overhead_params = upper_params;
      break;
    default:
      ledger.forward_macs_update = one_pass;
      ledger.cl_overhead_params = 0;
      break;
  }
  ledger.backward_macs_update = 2 * upper_macs;
  ledger.buffer_bytes = buffer ? cl::buffer_memory(*buffer) : 0;
  return ledger;
}

double distill_overhead_reduction(int64_t total_params, int64_t upper_params) {
  if (total_params < 1 || upper_params < 0 || upper_params > total_params) {
    throw std::invalid_argument("invalid parameter split");
  }
  return 1.0 - static_cast<double>(upper_params) / static_cast<double>(total_params);
}

int64_t raw_buffer_bytes(int64_t entries, int64_t height, int64_t width) {
  return entries * height * width * 3;
}

int64_t latent_buffer_bytes(int64_t entries, int64_t activation_numel) {
  return entries * activation_numel * static_cast<int64_t>(sizeof(double));
}

}  // namespace cldet::eval
