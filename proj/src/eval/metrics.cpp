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
#include "cldet/eval/metrics.hpp"

#include <algorithm>
#include <cstring>
#include <set>
#include <stdexcept>

namespace cldet::eval {
namespace {

constexpr int kIouThresholds = 10;  // 0.50, 0.55, ..., 0.95
constexpr int kRecallPoints = 101;
constexpr int64_t kEvalBatch = 16;

double iou_threshold(int i) { return 0.5 + 0.05 * static_cast<double>(i); }

}  // namespace

double iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  if (a[2] <= a[0] || a[3] <= a[1] || b[2] <= b[0] || b[3] <= b[1]) {
    throw std::invalid_argument("degenerate box in iou");
  }
  const double ix = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double uni =
      (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  return inter / uni;
}

double average_precision(std::vector<ScoredDetection> dets,
                         const std::vector<GroundTruth>& gts, double iou_thr) {
  if (iou_thr <= 0.0 || iou_thr > 1.0) {
    throw std::invalid_argument("iou threshold must lie in (0,1]");
  }
  if (gts.empty()) return 0.0;
  std::stable_sort(dets.begin(), dets.end(),
                   [](const ScoredDetection& a, const ScoredDetection& b) {
                     return a.score > b.score;
                   });

  std::vector<bool> taken(gts.size(), false);
  std::vector<double> precision, recall;
  precision.reserve(dets.size());
  recall.reserve(dets.size());
  int64_t tp = 0;
  for (size_t k = 0; k < dets.size(); ++k) {
    const ScoredDetection& d = dets[k];
    // A zero-extent box (the box head can emit all-zero distances) overlaps
    // nothing, so it can never clear a positive threshold; count it as a
    // false positive without asking iou() to accept it.
    const bool empty_box = d.box[2] <= d.box[0] || d.box[3] <= d.box[1];
    int64_t best = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (empty_box || taken[g] || gts[g].image_id != d.image_id) continue;
      const double v = iou(d.box, gts[g].box);
      if (v >= iou_thr && v > best_iou) {
        best = static_cast<int64_t>(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      taken[static_cast<size_t>(best)] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }

  // Right-to-left precision envelope, then 101-point interpolation.
  for (size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0;
  size_t k = 0;
  for (int i = 0; i < kRecallPoints; ++i) {
    const double r = static_cast<double>(i) / 100.0;
    while (k < recall.size() && recall[k] < r) ++k;
    if (k == recall.size()) break;
    ap += precision[k];
  }
  return ap / static_cast<double>(kRecallPoints);
}

EvalReport evaluate_detections(const std::vector<std::vector<det::Detection>>& dets,
                               const std::vector<std::vector<data::BoxAnnotation>>& gts,
                               cl::ClassRange old_range, cl::ClassRange new_range) {
  if (dets.size() != gts.size()) {
    throw std::invalid_argument("detection and ground-truth image counts disagree");
  }
  if (gts.empty()) throw std::invalid_argument("cannot evaluate an empty dataset");

  std::set<int64_t> classes;
  for (const auto& image : gts) {
    for (const data::BoxAnnotation& b : image) classes.insert(b.class_id);
  }

  EvalReport report;
  for (int64_t cls : classes) {
    std::vector<ScoredDetection> cls_dets;
    std::vector<GroundTruth> cls_gts;
    for (size_t img = 0; img < gts.size(); ++img) {
      for (const det::Detection& d : dets[img]) {
        if (d.class_id == cls) {
          cls_dets.push_back(ScoredDetection{static_cast<int64_t>(img), d.score, d.box});
        }
      }
      for (const data::BoxAnnotation& b : gts[img]) {
        if (b.class_id == cls) cls_gts.push_back(GroundTruth{static_cast<int64_t>(img), b.box});
      }
    }
    double ap = 0.0;
    for (int i = 0; i < kIouThresholds; ++i) {
      ap += average_precision(cls_dets, cls_gts, iou_threshold(i));
    }
    report.per_class_ap[cls] = ap / static_cast<double>(kIouThresholds);
  }

  auto range_mean = [&report](cl::ClassRange range) -> std::optional<double> {
    if (range.empty()) return std::nullopt;
    double sum = 0.0;
    int64_t n = 0;
    for (const auto& [cls, ap] : report.per_class_ap) {
      if (range.contains(cls)) {
        sum += ap;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  report.old_map = range_mean(old_range);
  report.new_map = range_mean(new_range);
  double sum = 0.0;
  for (const auto& [cls, ap] : report.per_class_ap) sum += ap;
  report.all_map = report.per_class_ap.empty()
                       ? 0.0
                       : sum / static_cast<double>(report.per_class_ap.size());
  return report;
}

EvalReport evaluate(const det::Detector& model, const std::vector<data::Sample>& samples,
                    cl::ClassRange old_range, cl::ClassRange new_range, double score_thr,
                    double nms_iou) {
  if (samples.empty()) throw std::invalid_argument("cannot evaluate an empty dataset");
  std::vector<std::vector<det::Detection>> dets;
  std::vector<std::vector<data::BoxAnnotation>> gts;
  dets.reserve(samples.size());
  gts.reserve(samples.size());

  const int64_t image_numel = samples[0].image.numel();
  for (size_t start = 0; start < samples.size(); start += kEvalBatch) {
    const size_t stop = std::min(samples.size(), start + kEvalBatch);
    const int64_t batch = static_cast<int64_t>(stop - start);
    ad::Shape shape{batch};
    const ad::Shape& unit = samples[start].image.shape();
    shape.insert(shape.end(), unit.begin(), unit.end());
    std::vector<double> pixels(static_cast<size_t>(batch * image_numel));
    for (size_t i = start; i < stop; ++i) {
      std::memcpy(pixels.data() + static_cast<int64_t>(i - start) * image_numel,
                  samples[i].image.raw(), static_cast<size_t>(image_numel) * sizeof(double));
    }
    det::HeadOutputs out = det::forward(model, ad::Tensor(shape, std::move(pixels)));
    std::vector<std::vector<det::Detection>> decoded =
        det::decode_detections(out, score_thr, nms_iou, model.spec.cell_stride());
    for (auto& image_dets : decoded) dets.push_back(std::move(image_dets));
    for (size_t i = start; i < stop; ++i) gts.push_back(samples[i].boxes);
  }
  return evaluate_detections(dets, gts, old_range, new_range);
}

}  // namespace cldet::eval
