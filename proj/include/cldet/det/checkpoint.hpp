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
#ifndef CLDET_DET_CHECKPOINT_HPP_
#define CLDET_DET_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cldet/ad/tensor.hpp"
#include "cldet/det/detector.hpp"
#include "json.hpp"

namespace cldet::det {

// On-disk container:
//   bytes 0..7   magic "CLDETCK1"
//   bytes 8..15  little-endian uint64 header length L
//   bytes 16..   UTF-8 JSON header of length L:
//                {"version":1, "meta":{...}, "tensors":[{"name","shape"},...]}
//   then one little-endian float64 payload per tensor, in header order.
// Round-trips are bit-exact.
struct CheckpointData {
  nlohmann::json meta;
  std::vector<std::pair<std::string, ad::Tensor>> tensors;
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

nlohmann::json spec_to_json(const DetectorSpec& spec);
DetectorSpec spec_from_json(const nlohmann::json& j);

// FNV-1a, used to fingerprint the spec inside checkpoint headers.
uint64_t fnv1a64(const std::string& s);

// Detector wrappers. The header stores the full spec, its digest, the frozen
// boundary, and caller metadata under "meta"; parameters are stored under
// their map names.
void save_detector(const std::string& path, const Detector& d,
                   const nlohmann::json& meta = nlohmann::json::object());
Detector load_detector(const std::string& path, nlohmann::json* meta = nullptr);

}  // namespace cldet::det

#endif  // CLDET_DET_CHECKPOINT_HPP_
