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
#ifndef CLDET_DET_DETECTOR_HPP_
#define CLDET_DET_DETECTOR_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cldet/ad/tape.hpp"
#include "cldet/ad/tensor.hpp"

namespace cldet::det {

struct ConvSpec {
  int64_t out_channels = 0;
  int64_t stride = 1;  // kernels are 3x3, pad 1 throughout
};

struct StageSpec {
  std::string name;
  std::vector<ConvSpec> convs;
};

// Tiny anchor-free one-stage detector: a strided convolutional backbone, a
// shared head trunk, and two 3x3 head convs emitting per-cell class logits
// and box distances on an S x S grid. Stage boundaries double as freeze
// boundaries and candidate latent split points.
struct DetectorSpec {
  int64_t input_size = 64;
  int64_t in_channels = 3;
  std::vector<StageSpec> stages;
  std::vector<int64_t> trunk_channels;
  int64_t num_classes = 0;
  int64_t grid = 8;
  // Boundary where latent_forward stops and upper_forward resumes.
  std::string latent_split = "stage3";

  // The default configuration: 3 stages of 2 convs (8, 16, 32 channels,
  // stride-2 entry conv per stage), 2-conv trunk at 32 channels, 8x8 grid.
  static DetectorSpec toy(int64_t num_classes);

  // Freeze/split boundary names in depth order:
  // "none", one per stage, then "trunk".
  std::vector<std::string> boundaries() const;
  // Position of `name` in boundaries(); throws on unknown names.
  int64_t boundary_index(const std::string& name) const;
  int64_t cell_stride() const { return input_size / grid; }
  void validate() const;
  // Canonical one-line description; hashed into checkpoint headers.
  std::string digest_string() const;
};

struct Detector {
  DetectorSpec spec;
  // Name -> value, ordered. requires_grad marks trainability relative to
  // frozen_boundary; values themselves are immutable (updates replace whole
  // tensors).
  std::map<std::string, ad::Tensor> params;
  std::string frozen_boundary = "none";

  bool is_trainable(const std::string& param_name) const;
};

struct HeadOutputs {
  ad::Tensor class_logits;    // [B, C, S, S], pre-sigmoid
  ad::Tensor box_regress;     // [B, 4, S, S], distances l/t/r/b, relu'd
  ad::Tensor trunk_features;  // [B, F, S, S], shared representation feeding both heads
};

struct Latent {
  ad::Tensor features;
  std::string split_point;
};

Detector build_detector(const DetectorSpec& spec, uint64_t seed);

// Watches trainable parameters on `tape` and passes frozen ones through as
// plain values. Forward calls take the returned map so gradients reach the
// parameters; afterwards the map's node ids key the GradMap back to names.
std::map<std::string, ad::Tensor> bind_params(const Detector& d, ad::Tape& tape);

// Full forward, composed as upper_forward(latent_forward(x)) so the
// composition identity holds bit-exactly by construction.
HeadOutputs forward(const Detector& d, const ad::Tensor& images,
                    const std::map<std::string, ad::Tensor>* bound = nullptr);

// Runs layers at or below the spec's latent split point.
Latent latent_forward(const Detector& d, const ad::Tensor& images,
                      const std::map<std::string, ad::Tensor>* bound = nullptr);

// Runs the remaining layers from a latent produced at the same split point.
HeadOutputs upper_forward(const Detector& d, const Latent& z,
                          const std::map<std::string, ad::Tensor>* bound = nullptr);

// Appends k class channels to the classification head. Existing channel
// weights are preserved bit-for-bit; new channels draw from the seeded
// generator with bias -4.0 so untrained classes start near-silent.
Detector expand_head(const Detector& d, int64_t k, uint64_t seed);

// Marks every parameter at or below `boundary` non-trainable.
Detector set_freeze(const Detector& d, const std::string& boundary);

int64_t total_param_count(const Detector& d);
int64_t trainable_param_count(const Detector& d);

struct Detection {
  int64_t class_id = 0;  // global 1-based id, == class channel index + 1
  std::array<double, 4> box{};  // x1, y1, x2, y2 in input pixels
  double score = 0.0;
};

// Sigmoid scores, per-cell anchor points at ((j+0.5)s, (i+0.5)s), greedy
// per-class NMS by descending score with deterministic tie-breaking on cell
// order. Returns one list per batch image.
std::vector<std::vector<Detection>> decode_detections(const HeadOutputs& out,
                                                      double score_thr,
                                                      double nms_iou,
                                                      int64_t stride = 8);

}  // namespace cldet::det

#endif  // CLDET_DET_DETECTOR_HPP_
