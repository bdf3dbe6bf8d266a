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
#include "cldet/det/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cldet::det {
namespace {

constexpr char kMagic[8] = {'C', 'L', 'D', 'E', 'T', 'C', 'K', '1'};
constexpr int kVersion = 1;

void put_u64(std::ofstream& out, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

uint64_t get_u64(std::ifstream& in) {
  char buf[8];
  in.read(buf, 8);
  if (!in) throw std::runtime_error("checkpoint truncated while reading length");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  }
  return v;
}

}  // namespace

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  nlohmann::json header;
  header["version"] = kVersion;
  header["meta"] = data.meta;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : data.tensors) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}});
  }
  header["tensors"] = std::move(tensors);
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  put_u64(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, t] : data.tensors) {
    // Host is little-endian x86/ARM; payload is the raw IEEE-754 image.
    out.write(reinterpret_cast<const char*>(t.raw()),
              static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
  }
  if (!out) throw std::runtime_error("write failure on '" + path + "'");
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("'" + path + "' is not a cldet checkpoint");
  }
  const uint64_t header_len = get_u64(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("checkpoint truncated inside header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint header: " + std::string(e.what()));
  }
  if (!header.contains("version") || header["version"].get<int>() != kVersion) {
    throw std::runtime_error("unsupported checkpoint version in '" + path + "'");
  }

  CheckpointData data;
  data.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const ad::Shape shape = entry.at("shape").get<ad::Shape>();
    const int64_t count = ad::shape_numel(shape);
    std::vector<double> values(static_cast<size_t>(count));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * static_cast<int64_t>(sizeof(double))));
    if (!in) {
      throw std::runtime_error("checkpoint truncated inside tensor '" + name + "'");
    }
    data.tensors.emplace_back(name, ad::Tensor(shape, std::move(values)));
  }
  return data;
}

nlohmann::json spec_to_json(const DetectorSpec& spec) {
  nlohmann::json stages = nlohmann::json::array();
  for (const StageSpec& s : spec.stages) {
    nlohmann::json convs = nlohmann::json::array();
    for (const ConvSpec& c : s.convs) {
      convs.push_back({{"out_channels", c.out_channels}, {"stride", c.stride}});
    }
    stages.push_back({{"name", s.name}, {"convs", std::move(convs)}});
  }
  return {{"input_size", spec.input_size}, {"in_channels", spec.in_channels},
          {"stages", std::move(stages)},   {"trunk_channels", spec.trunk_channels},
          {"num_classes", spec.num_classes}, {"grid", spec.grid},
          {"latent_split", spec.latent_split}};
}

DetectorSpec spec_from_json(const nlohmann::json& j) {
  DetectorSpec spec;
  spec.input_size = j.at("input_size").get<int64_t>();
  spec.in_channels = j.at("in_channels").get<int64_t>();
  for (const auto& s : j.at("stages")) {
    StageSpec stage;
    stage.name = s.at("name").get<std::string>();
    for (const auto& c : s.at("convs")) {
      stage.convs.push_back(
          {c.at("out_channels").get<int64_t>(), c.at("stride").get<int64_t>()});
    }
    spec.stages.push_back(std::move(stage));
  }
  spec.trunk_channels = j.at("trunk_channels").get<std::vector<int64_t>>();
  spec.num_classes = j.at("num_classes").get<int64_t>();
  spec.grid = j.at("grid").get<int64_t>();
  spec.latent_split = j.at("latent_split").get<std::string>();
  spec.validate();
  return spec;
}

void save_detector(const std::string& path, const Detector& d, const nlohmann::json& meta) {
  CheckpointData data;
  data.meta = meta;
  data.meta["spec"] = spec_to_json(d.spec);
  data.meta["spec_digest"] = fnv1a64(d.spec.digest_string());
  data.meta["frozen_boundary"] = d.frozen_boundary;
  for (const auto& [name, t] : d.params) data.tensors.emplace_back(name, t);
  write_checkpoint(path, data);
}

Detector load_detector(const std::string& path, nlohmann::json* meta) {
  CheckpointData data = read_checkpoint(path);
  Detector d;
  d.spec = spec_from_json(data.meta.at("spec"));
  const uint64_t digest = data.meta.at("spec_digest").get<uint64_t>();
  if (digest != fnv1a64(d.spec.digest_string())) {
    throw std::runtime_error("checkpoint spec digest mismatch in '" + path + "'");
  }
  for (auto& [name, t] : data.tensors) d.params.emplace(name, std::move(t));
  Detector out = set_freeze(d, data.meta.at("frozen_boundary").get<std::string>());
  if (meta) *meta = std::move(data.meta);
  return out;
}

}  // namespace cldet::det
