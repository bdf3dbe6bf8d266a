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
#ifndef CLDET_EVAL_METRICS_HPP_
#define CLDET_EVAL_METRICS_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cldet/cl/strategy.hpp"
#include "cldet/data/scenario.hpp"
#include "cldet/det/detector.hpp"

namespace cldet::eval {

// Intersection over union of two [x1,y1,x2,y2] boxes. Degenerate boxes
// (x1 >= x2 or y1 >= y2) are rejected.
double iou(const std::array<double, 4>& a, const std::array<double, 4>& b);

struct ScoredDetection {
  int64_t image_id = 0;
  double score = 0.0;
  std::array<double, 4> box{};
};

struct GroundTruth {
  int64_t image_id = 0;
  std::array<double, 4> box{};
};

// Greedy best-IoU matching at one threshold (each ground truth matches at
// most once), then 101-point interpolated area under the precision-recall
// curve. No ground truths -> 0.
double average_precision(std::vector<ScoredDetection> dets,
                         const std::vector<GroundTruth>& gts, double iou_thr);

struct EvalReport {
  // AP per class id, averaged over IoU thresholds 0.50:0.05:0.95. Classes
  // with no ground truth anywhere are absent.
  std::map<int64_t, double> per_class_ap;
  std::optional<double> old_map;
  std::optional<double> new_map;
  double all_map = 0.0;
};

// Aggregates decoded detections against full annotations. Old/new means are
// absent when their range contains no ground-truth class.
EvalReport evaluate_detections(const std::vector<std::vector<det::Detection>>& dets,
                               const std::vector<std::vector<data::BoxAnnotation>>& gts,
                               cl::ClassRange old_range, cl::ClassRange new_range);

// Runs the detector over the samples (full annotations) and scores it.
EvalReport evaluate(const det::Detector& model, const std::vector<data::Sample>& samples,
                    cl::ClassRange old_range, cl::ClassRange new_range,
                    double score_thr = 0.05, double nms_iou = 0.6);

}  // namespace cldet::eval

#endif  // CLDET_EVAL_METRICS_HPP_
