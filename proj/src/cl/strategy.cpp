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
#include "cldet/cl/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cldet::cl {
namespace {

constexpr double kFocalGamma = 2.0;
constexpr double kFocalAlpha = 0.25;
constexpr double kSmoothL1Beta = 1.0;
constexpr int64_t kImageNumel = 3 * 64 * 64;

ad::Tensor stack_tensors(const std::vector<const ad::Tensor*>& parts) {
  const ad::Shape& unit = parts.front()->shape();
  ad::Shape shape;
  shape.push_back(static_cast<int64_t>(parts.size()));
  shape.insert(shape.end(), unit.begin(), unit.end());
  std::vector<double> data(static_cast<size_t>(ad::shape_numel(shape)));
  const int64_t step = parts.front()->numel();
  for (size_t i = 0; i < parts.size(); ++i) {
    if (!(parts[i]->shape() == unit)) {
      throw std::invalid_argument("cannot stack mixed shapes " + ad::shape_str(unit) + " vs " +
                                  ad::shape_str(parts[i]->shape()));
    }
    std::memcpy(data.data() + static_cast<int64_t>(i) * step, parts[i]->raw(),
                static_cast<size_t>(step) * sizeof(double));
  }
  return ad::Tensor(shape, std::move(data));
}

std::vector<LossTarget> targets_of(const std::vector<TrainExample>& batch) {
  std::vector<LossTarget> targets;
  targets.reserve(batch.size());
  for (const TrainExample& ex : batch) targets.push_back(LossTarget{ex.boxes, ex.label_range});
  return targets;
}

ad::Tensor zero_scalar() { return ad::Tensor::scalar(0.0); }

LossBreakdown assemble(const StrategyState& state, ad::Tensor model_loss, ad::Tensor distill,
                       ad::Tensor intermediate) {
  LossBreakdown out;
  out.model_loss = model_loss;
  out.distill_loss = distill;
  out.intermediate_loss = intermediate;
  out.total = ad::add(model_loss, ad::scale(ad::add(distill, intermediate), state.alpha));
  return out;
}

}  // namespace

StrategyKind parse_strategy(const std::string& name) {
  if (name == "finetune") return StrategyKind::kFinetune;
  if (name == "joint") return StrategyKind::kJoint;
  if (name == "replay") return StrategyKind::kReplay;
  if (name == "latent_replay") return StrategyKind::kLatentReplay;
  if (name == "lwf") return StrategyKind::kLwf;
  if (name == "sid") return StrategyKind::kSid;
  if (name == "latent_distill") return StrategyKind::kLatentDistill;
  throw std::invalid_argument(
      "unknown strategy '" + name +
      "' (expected finetune|joint|replay|latent_replay|lwf|sid|latent_distill)");
}

const char* strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kFinetune: return "finetune";
    case StrategyKind::kJoint: return "joint";
    case StrategyKind::kReplay: return "replay";
    case StrategyKind::kLatentReplay: return "latent_replay";
    case StrategyKind::kLwf: return "lwf";
    case StrategyKind::kSid: return "sid";
    case StrategyKind::kLatentDistill: return "latent_distill";
  }
  return "?";
}

bool is_distill(StrategyKind kind) {
  return kind == StrategyKind::kLwf || kind == StrategyKind::kSid ||
         kind == StrategyKind::kLatentDistill;
}

bool is_replay(StrategyKind kind) {
  return kind == StrategyKind::kReplay || kind == StrategyKind::kLatentReplay;
}

int64_t buffer_memory(const ReplayBuffer& buffer) {
  int64_t bytes = 0;
  for (const BufferEntry& e : buffer.entries) {
    if (e.is_latent) {
      bytes += e.latent.numel() * static_cast<int64_t>(sizeof(double));
    } else {
      bytes += static_cast<int64_t>(e.image_u8.size());
    }
  }
  return bytes;
}

StrategyState make_strategy(StrategyKind kind, int64_t first_task_classes,
                            const std::string& freeze_boundary) {
  if (first_task_classes < 1) {
    throw std::invalid_argument("first task needs at least one class");
  }
  StrategyState state;
  state.kind = kind;
  state.alpha = 1.0;
  state.new_range = ClassRange{1, first_task_classes};
  state.old_range = ClassRange{1, 0};
  const bool latent_kind =
      kind == StrategyKind::kLatentReplay || kind == StrategyKind::kLatentDistill;
  state.freeze_boundary = freeze_boundary.empty() ? (latent_kind ? "stage3" : "none")
                                                  : freeze_boundary;
  state.buffer.latent = kind == StrategyKind::kLatentReplay;
  state.buffer.split_point = state.freeze_boundary;
  return state;
}

TrainExample make_example(const data::Sample& sample, ClassRange label_range) {
  TrainExample ex;
  ex.image = sample.image;
  ex.boxes = sample.boxes;
  ex.label_range = label_range;
  return ex;
}

ClassRange supervised_range(const StrategyState& state) {
  const bool masked =
      state.kind == StrategyKind::kSid || state.kind == StrategyKind::kLatentDistill;
  if (masked || state.old_range.empty()) return state.new_range;
  return ClassRange{state.old_range.first, state.new_range.last};
}

// ---- losses -----------------------------------------------------------------

DetectionLossParts detection_loss_parts(const det::HeadOutputs& out,
                                        const std::vector<LossTarget>& targets,
                                        int64_t stride) {
  const ad::Shape& ls = out.class_logits.shape();
  if (ls.size() != 4 || out.box_regress.shape().size() != 4) {
    throw std::invalid_argument("detection_loss expects 4-d head outputs");
  }
  const int64_t batch = ls[0], classes = ls[1], grid = ls[2];
  if (ls[3] != grid || out.box_regress.shape() != ad::Shape{batch, 4, grid, grid}) {
    throw std::invalid_argument("head output shapes disagree");
  }
  if (static_cast<int64_t>(targets.size()) != batch) {
    throw std::invalid_argument("expected " + std::to_string(batch) + " target sets, got " +
                                std::to_string(targets.size()));
  }
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");

  std::vector<double> cls_target(static_cast<size_t>(batch * classes * grid * grid), 0.0);
  std::vector<double> cls_mask(cls_target.size(), 0.0);
  std::vector<double> box_target(static_cast<size_t>(batch * 4 * grid * grid), 0.0);
  std::vector<double> box_mask(box_target.size(), 0.0);
  int64_t positives = 0;

  for (int64_t b = 0; b < batch; ++b) {
    const LossTarget& t = targets[static_cast<size_t>(b)];
    if (!t.range.empty() && (t.range.first < 1 || t.range.last > classes)) {
      throw std::invalid_argument("target range exceeds class channels");
    }
    for (const data::BoxAnnotation& box : t.boxes) {
      if (!t.range.contains(box.class_id)) {
        throw std::invalid_argument("target class " + std::to_string(box.class_id) +
                                    " outside supervised range");
      }
    }
    for (int64_t c = t.range.first - 1; c < t.range.last; ++c) {
      std::fill_n(cls_mask.begin() + ((b * classes + c) * grid * grid), grid * grid, 1.0);
    }
    for (int64_t i = 0; i < grid; ++i) {
      for (int64_t j = 0; j < grid; ++j) {
        const double cx = (static_cast<double>(j) + 0.5) * static_cast<double>(stride);
        const double cy = (static_cast<double>(i) + 0.5) * static_cast<double>(stride);
        const data::BoxAnnotation* best = nullptr;
        double best_area = 0.0;
        for (const data::BoxAnnotation& box : t.boxes) {
          if (cx < box.box[0] || cx > box.box[2] || cy < box.box[1] || cy > box.box[3]) continue;
          const double area = (box.box[2] - box.box[0]) * (box.box[3] - box.box[1]);
          if (best == nullptr || area < best_area) {
            best = &box;
            best_area = area;
          }
        }
        if (best == nullptr) continue;
        ++positives;
        const int64_t cell = i * grid + j;
        cls_target[static_cast<size_t>((b * classes + best->class_id - 1) * grid * grid + cell)] =
            1.0;
        const double d[4] = {cx - best->box[0], cy - best->box[1], best->box[2] - cx,
                             best->box[3] - cy};
        for (int64_t k = 0; k < 4; ++k) {
          box_target[static_cast<size_t>((b * 4 + k) * grid * grid + cell)] = d[k];
          box_mask[static_cast<size_t>((b * 4 + k) * grid * grid + cell)] = 1.0;
        }
      }
    }
  }

  DetectionLossParts parts;
  parts.positives = positives;
  parts.focal_sum = ad::focal_loss_sum(out.class_logits, ad::Tensor(ls, std::move(cls_target)),
                                       ad::Tensor(ls, std::move(cls_mask)), kFocalGamma,
                                       kFocalAlpha);
  const ad::Shape bs{batch, 4, grid, grid};
  parts.box_sum = ad::smooth_l1_sum(out.box_regress, ad::Tensor(bs, std::move(box_target)),
                                    ad::Tensor(bs, std::move(box_mask)), kSmoothL1Beta);
  return parts;
}

ad::Tensor detection_loss(const det::HeadOutputs& out, const std::vector<LossTarget>& targets,
                          int64_t stride) {
  DetectionLossParts parts = detection_loss_parts(out, targets, stride);
  const double norm = 1.0 / static_cast<double>(std::max<int64_t>(1, parts.positives));
  return ad::scale(ad::add(parts.focal_sum, parts.box_sum), norm);
}

ad::Tensor detection_loss(const det::HeadOutputs& out,
                          const std::vector<std::vector<data::BoxAnnotation>>& boxes,
                          ClassRange range, int64_t stride) {
  std::vector<LossTarget> targets;
  targets.reserve(boxes.size());
  for (const auto& b : boxes) targets.push_back(LossTarget{b, range});
  return detection_loss(out, targets, stride);
}

ad::Tensor masked_distill_loss(const det::HeadOutputs& student, const det::HeadOutputs& teacher,
                               ClassRange old_range) {
  if (old_range.empty() || old_range.first != 1) {
    throw std::invalid_argument("old range must cover classes [1..c]");
  }
  const int64_t c = old_range.count();
  if (c > teacher.class_logits.dim(1) || c > student.class_logits.dim(1)) {
    throw std::invalid_argument("old range exceeds available class channels");
  }
  return ad::mse(ad::narrow(student.class_logits, 1, 0, c),
                 ad::narrow(teacher.class_logits, 1, 0, c));
}

ad::Tensor lwf_distill_loss(const det::HeadOutputs& student, const det::HeadOutputs& teacher) {
  const int64_t ct = teacher.class_logits.dim(1);
  if (student.class_logits.dim(1) < ct) {
    throw std::invalid_argument("student has fewer class channels than teacher");
  }
  return ad::add(ad::mse(ad::narrow(student.class_logits, 1, 0, ct), teacher.class_logits),
                 ad::mse(student.box_regress, teacher.box_regress));
}

ad::Tensor intermediate_distill_loss(const ad::Tensor& student_trunk,
                                     const ad::Tensor& teacher_trunk) {
  return ad::mse(student_trunk, teacher_trunk);
}

// ---- strategy plumbing -------------------------------------------------------

std::vector<TrainExample> compose_batch(const StrategyState& state,
                                        const std::vector<TrainExample>& task_batch,
                                        SplitMix64& rng) {
  if (!is_replay(state.kind) || state.task_index == 0) return task_batch;
  if (state.buffer.entries.empty()) {
    throw std::invalid_argument("replay strategy has an empty buffer after task 0");
  }
  std::vector<TrainExample> out = task_batch;
  const int64_t want = static_cast<int64_t>(task_batch.size());
  const int64_t have = static_cast<int64_t>(state.buffer.entries.size());
  // Sample without replacement when the buffer allows it.
  std::vector<int64_t> pool(static_cast<size_t>(have));
  for (int64_t i = 0; i < have; ++i) pool[static_cast<size_t>(i)] = i;
  for (int64_t k = 0; k < want; ++k) {
    const int64_t remaining = have - (k % have);
    const int64_t pick = rng.uniform_int(0, remaining - 1);
    std::swap(pool[static_cast<size_t>(pick)], pool[static_cast<size_t>(remaining - 1)]);
    const BufferEntry& e = state.buffer.entries[static_cast<size_t>(pool[static_cast<size_t>(remaining - 1)])];
    TrainExample ex;
    ex.boxes = e.boxes;
    ex.label_range = e.label_range;
    if (e.is_latent) {
      ex.is_latent = true;
      ex.latent = e.latent;
    } else {
      std::vector<double> pix(e.image_u8.size());
      for (size_t i = 0; i < pix.size(); ++i) pix[i] = static_cast<double>(e.image_u8[i]) / 255.0;
      ex.image = ad::Tensor(e.image_shape, std::move(pix));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

BufferEntry entry_from_sample(const ReplayBuffer& buffer, const data::Sample& sample,
                              ClassRange range, const det::Detector& model,
                              const std::string& split) {
  BufferEntry e;
  e.boxes = sample.boxes;
  e.label_range = range;
  if (buffer.latent) {
    e.is_latent = true;
    det::Detector probe = model;
    probe.spec.latent_split = split;
    probe.spec.validate();
    ad::Shape batched{1};
    const ad::Shape& s = sample.image.shape();
    batched.insert(batched.end(), s.begin(), s.end());
    det::Latent z = det::latent_forward(
        probe, ad::Tensor(batched, std::vector<double>(sample.image.raw(),
                                                       sample.image.raw() + sample.image.numel())));
    ad::Shape unit(z.features.shape().begin() + 1, z.features.shape().end());
    e.latent = ad::Tensor(unit, std::vector<double>(z.features.raw(),
                                                    z.features.raw() + z.features.numel()));
  } else {
    e.image_u8.resize(static_cast<size_t>(sample.image.numel()));
    e.image_shape = sample.image.shape();
    const double* pix = sample.image.raw();
    for (size_t i = 0; i < e.image_u8.size(); ++i) {
      e.image_u8[i] = static_cast<uint8_t>(std::lround(std::clamp(pix[i], 0.0, 1.0) * 255.0));
    }
  }
  return e;
}

}  // namespace

void update_buffer(StrategyState& state, const data::TaskDataset& task,
                   const det::Detector& model, uint64_t seed) {
  if (!is_replay(state.kind)) return;
  ReplayBuffer& buffer = state.buffer;
  SplitMix64 rng(seed);
  const int64_t n = static_cast<int64_t>(task.samples.size());
  if (n == 0) return;
  const ClassRange range{task.first_class, task.last_class};

  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = rng.uniform_int(0, i);
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }

  if (buffer.entries.empty()) {
    const int64_t take = std::min(buffer.capacity, n);
    for (int64_t k = 0; k < take; ++k) {
      buffer.entries.push_back(entry_from_sample(
          buffer, task.samples[static_cast<size_t>(order[static_cast<size_t>(k)])], range, model,
          buffer.split_point));
    }
    return;
  }

  // Replace ceil(capacity/2) randomly chosen slots with fresh task samples.
  const int64_t half = (buffer.capacity + 1) / 2;
  const int64_t replace = std::min({half, n, static_cast<int64_t>(buffer.entries.size())});
  std::vector<int64_t> slots(buffer.entries.size());
  for (size_t i = 0; i < slots.size(); ++i) slots[i] = static_cast<int64_t>(i);
  for (int64_t i = static_cast<int64_t>(slots.size()) - 1; i > 0; --i) {
    const int64_t j = rng.uniform_int(0, i);
    std::swap(slots[static_cast<size_t>(i)], slots[static_cast<size_t>(j)]);
  }
  for (int64_t k = 0; k < replace; ++k) {
    buffer.entries[static_cast<size_t>(slots[static_cast<size_t>(k)])] = entry_from_sample(
        buffer, task.samples[static_cast<size_t>(order[static_cast<size_t>(k)])], range, model,
        buffer.split_point);
  }
}

namespace {

// Stacks the raw images of a batch into [B,3,H,W].
ad::Tensor stack_images(const std::vector<TrainExample>& batch) {
  std::vector<const ad::Tensor*> parts;
  parts.reserve(batch.size());
  for (const TrainExample& ex : batch) {
    if (ex.is_latent) throw std::invalid_argument("latent example where an image was expected");
    parts.push_back(&ex.image);
  }
  return stack_tensors(parts);
}

}  // namespace

LossBreakdown strategy_loss(const StrategyState& state, const det::Detector& student,
                            const std::vector<TrainExample>& batch, ad::Tape& tape,
                            const std::map<std::string, ad::Tensor>* bound) {
  (void)tape;  // losses live on whichever tape the bound parameters are watched on
  if (batch.empty()) throw std::invalid_argument("strategy_loss needs a non-empty batch");
  if (is_distill(state.kind) && state.task_index > 0 && state.teacher == nullptr) {
    throw std::invalid_argument("distillation strategy has no teacher after task 0");
  }
  const int64_t stride = student.spec.cell_stride();
  const std::vector<LossTarget> targets = targets_of(batch);

  switch (state.kind) {
    case StrategyKind::kFinetune:
    case StrategyKind::kJoint:
    case StrategyKind::kReplay: {
      det::HeadOutputs out = det::forward(student, stack_images(batch), bound);
      return assemble(state, detection_loss(out, targets, stride), zero_scalar(), zero_scalar());
    }

    case StrategyKind::kLatentReplay: {
      std::vector<TrainExample> raw, stored;
      for (const TrainExample& ex : batch) (ex.is_latent ? stored : raw).push_back(ex);
      if (stored.empty()) {
        det::HeadOutputs out = det::forward(student, stack_images(raw), bound);
        return assemble(state, detection_loss(out, targets_of(raw), stride), zero_scalar(),
                        zero_scalar());
      }
      std::vector<const ad::Tensor*> parts;
      std::vector<ad::Tensor> singles;
      singles.reserve(raw.size() + stored.size());
      if (!raw.empty()) {
        // Stored activations are plain values, so the live images must map to
        // plain values too: the layers below the split have to be frozen.
        det::Latent z_raw = det::latent_forward(student, stack_images(raw), bound);
        if (z_raw.features.on_tape()) {
          throw std::invalid_argument(
              "latent replay needs the layers below '" + student.spec.latent_split +
              "' frozen so stored activations match live ones");
        }
        const ad::Shape unit(z_raw.features.shape().begin() + 1, z_raw.features.shape().end());
        const int64_t step = ad::shape_numel(unit);
        for (int64_t b = 0; b < static_cast<int64_t>(raw.size()); ++b) {
          std::vector<double> v(z_raw.features.raw() + b * step,
                                z_raw.features.raw() + (b + 1) * step);
          singles.push_back(ad::Tensor(unit, std::move(v)));
        }
      }
      for (const TrainExample& ex : stored) singles.push_back(ex.latent);
      for (const ad::Tensor& t : singles) parts.push_back(&t);
      det::Latent z{stack_tensors(parts), student.spec.latent_split};
      det::HeadOutputs out = det::upper_forward(student, z, bound);
      std::vector<LossTarget> ordered = targets_of(raw);
      for (const TrainExample& ex : stored) ordered.push_back(LossTarget{ex.boxes, ex.label_range});
      return assemble(state, detection_loss(out, ordered, stride), zero_scalar(), zero_scalar());
    }

    case StrategyKind::kLwf: {
      ad::Tensor x = stack_images(batch);
      det::HeadOutputs out = det::forward(student, x, bound);
      ad::Tensor model_loss = detection_loss(out, targets, stride);
      if (!state.teacher) return assemble(state, model_loss, zero_scalar(), zero_scalar());
      det::HeadOutputs ref = det::forward(*state.teacher, x);
      return assemble(state, model_loss, lwf_distill_loss(out, ref), zero_scalar());
    }

    case StrategyKind::kSid: {
      ad::Tensor x = stack_images(batch);
      det::HeadOutputs out = det::forward(student, x, bound);
      ad::Tensor model_loss = detection_loss(out, targets, stride);
      if (!state.teacher) return assemble(state, model_loss, zero_scalar(), zero_scalar());
      det::HeadOutputs ref = det::forward(*state.teacher, x);
      return assemble(state, model_loss, masked_distill_loss(out, ref, state.old_range),
                      intermediate_distill_loss(out.trunk_features, ref.trunk_features));
    }

    case StrategyKind::kLatentDistill: {
      // One pass through the lower layers; teacher and student share it.
      det::Latent z = det::latent_forward(student, stack_images(batch), bound);
      det::HeadOutputs out = det::upper_forward(student, z, bound);
      ad::Tensor model_loss = detection_loss(out, targets, stride);
      if (!state.teacher) return assemble(state, model_loss, zero_scalar(), zero_scalar());
      det::HeadOutputs ref = det::upper_forward(*state.teacher, z);
      return assemble(state, model_loss, masked_distill_loss(out, ref, state.old_range),
                      intermediate_distill_loss(out.trunk_features, ref.trunk_features));
    }
  }
  throw std::logic_error("unreachable strategy kind");
}

TaskTransition finalize_task(const StrategyState& state, const det::Detector& model,
                             const data::TaskDataset& finished_task, int64_t next_k,
                             uint64_t seed) {
  if (next_k < 1) {
    throw std::invalid_argument("next task needs at least one class, got " +
                                std::to_string(next_k));
  }
  TaskTransition out;
  out.state = state;

  if (is_distill(state.kind)) {
    auto teacher = std::make_shared<det::Detector>(model);
    if (state.kind == StrategyKind::kLatentDistill) {
      // The shared lower layers are not stored twice: the teacher keeps only
      // the layers above the freeze boundary.
      teacher->spec.latent_split = state.freeze_boundary;
      teacher->spec.validate();
      *teacher = det::set_freeze(*teacher, state.freeze_boundary);
      for (auto it = teacher->params.begin(); it != teacher->params.end();) {
        if (!teacher->is_trainable(it->first)) {
          it = teacher->params.erase(it);
        } else {
          ++it;
        }
      }
    }
    out.state.teacher = std::move(teacher);
  }

  if (is_replay(state.kind)) {
    update_buffer(out.state, finished_task, model, derive_seed(seed, 0xB0FF));
  }

  det::Detector next = det::expand_head(model, next_k, derive_seed(seed, 0xE09A));
  const bool latent_kind = state.kind == StrategyKind::kLatentReplay ||
                           state.kind == StrategyKind::kLatentDistill;
  if (latent_kind) {
    next.spec.latent_split = state.freeze_boundary;
    next.spec.validate();
  }
  out.model = det::set_freeze(next, state.freeze_boundary);

  out.state.old_range = ClassRange{1, state.new_range.last};
  out.state.new_range = ClassRange{state.new_range.last + 1, state.new_range.last + next_k};
  out.state.task_index = state.task_index + 1;
  return out;
}

}  // namespace cldet::cl
