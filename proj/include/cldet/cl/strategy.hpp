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
#ifndef CLDET_CL_STRATEGY_HPP_
#define CLDET_CL_STRATEGY_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cldet/ad/ops.hpp"
#include "cldet/ad/tape.hpp"
#include "cldet/data/scenario.hpp"
#include "cldet/det/detector.hpp"
#include "cldet/rng.hpp"

namespace cldet::cl {

enum class StrategyKind {
  kFinetune,
  kJoint,
  kReplay,
  kLatentReplay,
  kLwf,
  kSid,
  kLatentDistill,
};

StrategyKind parse_strategy(const std::string& name);
const char* strategy_name(StrategyKind kind);
bool is_distill(StrategyKind kind);  // lwf, sid, latent_distill
bool is_replay(StrategyKind kind);   // replay, latent_replay

// Contiguous 1-based global class-id range; first > last means empty.
struct ClassRange {
  int64_t first = 1;
  int64_t last = 0;
  bool empty() const { return first > last; }
  int64_t count() const { return empty() ? 0 : last - first + 1; }
  bool contains(int64_t id) const { return id >= first && id <= last; }
};

// One stored rehearsal sample. Raw entries quantize the image to bytes and
// dequantize on use; latent entries keep the split-point activation as-is.
struct BufferEntry {
  bool is_latent = false;
  std::vector<uint8_t> image_u8;  // raw entries only, one byte per channel value
  ad::Shape image_shape;          // [3,H,W] of the quantized image
  ad::Tensor latent;              // [C,H,W], latent entries only
  std::vector<data::BoxAnnotation> boxes;
  ClassRange label_range;
};

struct ReplayBuffer {
  int64_t capacity = 50;
  bool latent = false;
  std::string split_point = "none";
  std::vector<BufferEntry> entries;
};

// Bytes held by the buffer: raw entries cost H*W*3 one-byte channels each,
// latent entries cost numel * sizeof(double).
int64_t buffer_memory(const ReplayBuffer& buffer);

struct StrategyState {
  StrategyKind kind = StrategyKind::kFinetune;
  double alpha = 1.0;
  std::string freeze_boundary = "none";
  int64_t task_index = 0;
  ClassRange old_range;  // empty during task 0
  ClassRange new_range;
  std::shared_ptr<const det::Detector> teacher;  // distill kinds, task >= 1
  ReplayBuffer buffer;                           // replay kinds
};

StrategyState make_strategy(StrategyKind kind, int64_t first_task_classes,
                            const std::string& freeze_boundary);

// One training example as consumed by strategy_loss. Either a raw image or a
// latent activation, with the class range its annotations cover.
struct TrainExample {
  bool is_latent = false;
  ad::Tensor image;   // [3,64,64]
  ad::Tensor latent;  // [C,H,W]
  std::vector<data::BoxAnnotation> boxes;
  ClassRange label_range;
};

TrainExample make_example(const data::Sample& sample, ClassRange label_range);

// Class channels the model loss supervises on current-task samples. sid and
// latent_distill restrict it to the new classes (old channels are owned by
// the distillation term); every other kind trains all classes seen so far,
// so old-class objects left unlabeled in new tasks act as background.
ClassRange supervised_range(const StrategyState& state);

// ---- losses -----------------------------------------------------------------

struct LossTarget {
  std::vector<data::BoxAnnotation> boxes;
  ClassRange range;  // class channels supervised for this image
};

// Raw sums before positive-count normalization, so callers can merge
// sub-batches under a single normalizer.
struct DetectionLossParts {
  ad::Tensor focal_sum;
  ad::Tensor box_sum;
  int64_t positives = 0;
};

// Per-cell assignment: a grid cell is positive for the smallest-area target
// box containing its center. Focal loss (gamma=2, alpha=0.25) over the class
// channels inside each image's range, smooth-L1 (beta=1) on positive-cell
// box distances; both normalized by max(1, positives). Channels outside the
// range receive exactly zero gradient.
DetectionLossParts detection_loss_parts(const det::HeadOutputs& out,
                                        const std::vector<LossTarget>& targets,
                                        int64_t stride = 8);
ad::Tensor detection_loss(const det::HeadOutputs& out,
                          const std::vector<LossTarget>& targets, int64_t stride = 8);
ad::Tensor detection_loss(const det::HeadOutputs& out,
                          const std::vector<std::vector<data::BoxAnnotation>>& boxes,
                          ClassRange range, int64_t stride = 8);

// MSE between class logits restricted to old_range channels; box outputs and
// newer class channels are excluded.
ad::Tensor masked_distill_loss(const det::HeadOutputs& student,
                               const det::HeadOutputs& teacher, ClassRange old_range);

// Unmasked MSE over the teacher's class channels plus MSE over box outputs.
ad::Tensor lwf_distill_loss(const det::HeadOutputs& student, const det::HeadOutputs& teacher);

ad::Tensor intermediate_distill_loss(const ad::Tensor& student_trunk,
                                     const ad::Tensor& teacher_trunk);

// ---- strategy plumbing -------------------------------------------------------

// Replay kinds append an equal number of buffer samples to the batch;
// everything else passes through.
std::vector<TrainExample> compose_batch(const StrategyState& state,
                                        const std::vector<TrainExample>& task_batch,
                                        SplitMix64& rng);

// Task 0 fills the buffer by uniform sampling without replacement; later
// tasks replace ceil(capacity/2) randomly chosen slots with new-task samples.
void update_buffer(StrategyState& state, const data::TaskDataset& task,
                   const det::Detector& model, uint64_t seed);

struct LossBreakdown {
  ad::Tensor model_loss;
  ad::Tensor distill_loss;
  ad::Tensor intermediate_loss;
  ad::Tensor total;  // model + alpha * (distill + intermediate)
};

// Builds the full training loss on the caller's tape. latent_distill runs the
// lower layers once and feeds the shared activation to both the teacher and
// the student upper layers.
LossBreakdown strategy_loss(const StrategyState& state, const det::Detector& student,
                            const std::vector<TrainExample>& batch, ad::Tape& tape,
                            const std::map<std::string, ad::Tensor>* bound);

// End-of-task transition: snapshot the teacher (distill kinds; latent_distill
// keeps only the layers above the freeze boundary), refresh the buffer
// (replay kinds), expand the head by next_k classes, apply the freeze
// boundary, and advance the class ranges.
struct TaskTransition {
  det::Detector model;
  StrategyState state;
};

TaskTransition finalize_task(const StrategyState& state, const det::Detector& model,
                             const data::TaskDataset& finished_task, int64_t next_k,
                             uint64_t seed);

}  // namespace cldet::cl

#endif  // CLDET_CL_STRATEGY_HPP_
