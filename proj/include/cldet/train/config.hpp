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
#ifndef CLDET_TRAIN_CONFIG_HPP_
#define CLDET_TRAIN_CONFIG_HPP_

#include <cstdint>
#include <string>

#include "cldet/cl/strategy.hpp"
#include "cldet/train/optim.hpp"

namespace cldet::train {

// A full experiment description. The file format is INI-style sections of
// key = value lines ([experiment], [data], [train]); '#' and ';' start
// comments. Parse errors carry 1-based line numbers.
struct ExperimentConfig {
  std::string scenario = "4p4";
  cl::StrategyKind strategy = cl::StrategyKind::kFinetune;
  std::string freeze;  // empty -> strategy default boundary
  std::string output_dir = "run";
  uint64_t train_seed = 1;

  int64_t images = 1000;
  uint64_t data_seed = 1;
  int64_t eval_images = 200;

  Hyperparams hp;

  void validate() const;
  // Canonical key=value digest; stored in checkpoints so resume can refuse
  // checkpoints from a different configuration.
  std::string digest() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace cldet::train

#endif  // CLDET_TRAIN_CONFIG_HPP_
