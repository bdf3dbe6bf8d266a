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
#ifndef CLDET_TRAIN_TRAINER_HPP_
#define CLDET_TRAIN_TRAINER_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cldet/cl/strategy.hpp"
#include "cldet/data/scenario.hpp"
#include "cldet/det/detector.hpp"
#include "cldet/eval/ledger.hpp"
#include "cldet/eval/metrics.hpp"
#include "cldet/train/config.hpp"
#include "cldet/train/optim.hpp"

namespace cldet::train {

struct EpochStats {
  int64_t epoch = 0;
  double mean_total = 0.0;
  double mean_model = 0.0;
  double mean_distill = 0.0;  // distill + intermediate terms, already alpha-scaled
};

struct TrainTaskResult {
  det::Detector model;
  std::vector<EpochStats> curve;
};

// Runs epochs_per_task epochs of compose_batch -> strategy_loss -> backward
// -> adamw_step with a fresh optimizer and a per-task warmup+cosine schedule.
// Deterministic given (model, state, task, hp, seed). A non-finite loss or
// gradient aborts; if `abort_dump_path` is set the current model is saved
// there first.
TrainTaskResult train_task(const det::Detector& model, const cl::StrategyState& state,
                           const data::TaskDataset& task, const Hyperparams& hp,
                           uint64_t seed, const std::string& abort_dump_path = "");

// One results.csv row. Absent mAP fields serialize as empty cells.
struct TaskRow {
  int64_t task = 0;
  std::string strategy;
  std::optional<double> old_map;
  std::optional<double> new_map;
  double all_map = 0.0;
  eval::CostLedger ledger;
};

std::string csv_header();
std::string csv_row(const TaskRow& row);
std::vector<TaskRow> read_csv(const std::string& path);

// Key = value report combining an evaluation and a cost ledger; written next
// to each checkpoint and printed by the standalone eval command.
std::string format_report(const eval::EvalReport& report, const eval::CostLedger& ledger);

// Artifact locations inside cfg.output_dir.
std::string checkpoint_path(const ExperimentConfig& cfg, int64_t task);
std::string curve_path(const ExperimentConfig& cfg, int64_t task);
std::string report_path(const ExperimentConfig& cfg, int64_t task);
std::string csv_path(const ExperimentConfig& cfg);

struct RunArtifacts {
  std::vector<TaskRow> rows;
  std::string csv;  // path of the aggregate CSV
};

// Full experimental protocol: generate data, split tasks, then per task
// finalize -> train -> evaluate on a held-out fully-annotated set (classes
// seen so far) -> cost ledger -> checkpoint -> CSV row. With `resume`,
// completed tasks are restored from their checkpoints (config digests must
// match) and the run continues; artifacts are byte-identical to an
// uninterrupted run.
RunArtifacts run_experiment(const ExperimentConfig& cfg, bool resume = false);

}  // namespace cldet::train

#endif  // CLDET_TRAIN_TRAINER_HPP_
