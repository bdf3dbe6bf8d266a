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
#ifndef CLDET_DATA_SCENARIO_HPP_
#define CLDET_DATA_SCENARIO_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cldet/ad/tensor.hpp"

namespace cldet::data {

// Axis-aligned box annotation. Class ids are global and 1-based; boxes are
// [x1,y1,x2,y2] in pixels with the half-open pixel convention.
struct BoxAnnotation {
  int64_t class_id = 0;
  std::array<double, 4> box{};
};

struct Sample {
  ad::Tensor image;  // [3,64,64], values in [0,1]
  std::vector<BoxAnnotation> boxes;
};

struct Dataset {
  int64_t num_classes = 0;
  int64_t image_size = 64;
  std::vector<Sample> samples;
};

// Class counts per task, parsed from strings like "8", "4p4", "6p2", "7p1"
// and "4p1x4" (the x suffix repeats the preceding count).
struct ScenarioSpec {
  std::vector<int64_t> counts;

  static ScenarioSpec parse(const std::string& text);
  int64_t total_classes() const;
  int64_t num_tasks() const { return static_cast<int64_t>(counts.size()); }
  std::string str() const;
};

// One task's view of the dataset: only images with at least one visible-class
// instance, with training annotations filtered to the visible range.
// full_annotations keeps every box of those images for evaluation oracles.
struct TaskDataset {
  int64_t task_index = 0;
  int64_t first_class = 0;  // inclusive
  int64_t last_class = 0;   // inclusive
  std::vector<int64_t> image_ids;
  std::vector<Sample> samples;
  std::vector<std::vector<BoxAnnotation>> full_annotations;
};

using TaskSequence = std::vector<TaskDataset>;

// Deterministic synthetic shapes-on-canvas detection set. Each image holds
// 1-3 non-overlapping objects (tight-box IoU <= 0.3 by rejection) drawn from
// an 8-shape vocabulary; class id selects the shape.
Dataset generate_dataset(int64_t num_images, int64_t num_classes, uint64_t seed);

TaskSequence split_tasks(const Dataset& ds, const ScenarioSpec& scenario);

// Index batches over task.samples under a seeded shuffle; the final partial
// batch is kept.
std::vector<std::vector<int64_t>> batch_iter(const TaskDataset& task,
                                             int64_t batch_size,
                                             uint64_t epoch_seed);

// Directory layout: dataset.json (header), images.f64 (raw little-endian
// doubles, image-id order), annotations.txt (one "id class x1 y1 x2 y2" line
// per box).
void export_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

const std::vector<std::string>& shape_names();

}  // namespace cldet::data

#endif  // CLDET_DATA_SCENARIO_HPP_
