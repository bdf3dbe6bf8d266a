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
#include "cldet/det/detector.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cldet/ad/ops.hpp"
#include "cldet/rng.hpp"

namespace cldet::det {
namespace {

constexpr double kNewClassBias = -4.0;

std::vector<double> kaiming_uniform(SplitMix64& rng, int64_t count, int64_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(count));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return v;
}

// Depth rank of the block owning a parameter, aligned with boundary indices:
// stage i -> i, trunk -> #stages+1, heads -> #stages+2 (never freezable).
int64_t param_block(const DetectorSpec& spec, const std::string& name) {
  const std::string prefix = name.substr(0, name.find('.'));
  for (size_t i = 0; i < spec.stages.size(); ++i) {
    if (prefix == spec.stages[i].name) return static_cast<int64_t>(i) + 1;
  }
  if (prefix == "trunk") return static_cast<int64_t>(spec.stages.size()) + 1;
  if (prefix == "head") return static_cast<int64_t>(spec.stages.size()) + 2;
  throw std::logic_error("parameter '" + name + "' belongs to no known block");
}

const ad::Tensor& lookup(const Detector& d,
                         const std::map<std::string, ad::Tensor>* bound,
                         const std::string& name) {
  const auto& m = bound ? *bound : d.params;
  auto it = m.find(name);
  if (it == m.end()) throw std::logic_error("missing parameter '" + name + "'");
  return it->second;
}

ad::Tensor conv_block(const ad::Tensor& x, const ad::Tensor& w, const ad::Tensor& b,
                      int64_t stride) {
  return ad::relu(ad::channel_bias_add(ad::conv2d(x, w, stride, 1), b));
}

// Feature channel count and spatial size entering the block just above a
// boundary.
void shape_at_boundary(const DetectorSpec& spec, int64_t boundary_idx,
                       int64_t* channels, int64_t* hw) {
  int64_t c = spec.in_channels;
  int64_t s = spec.input_size;
  for (int64_t i = 0; i < boundary_idx && i < static_cast<int64_t>(spec.stages.size()); ++i) {
    for (const ConvSpec& conv : spec.stages[static_cast<size_t>(i)].convs) {
      c = conv.out_channels;
      s = (s + 2 - 3) / conv.stride + 1;
    }
  }
  if (boundary_idx > static_cast<int64_t>(spec.stages.size())) {
    if (!spec.trunk_channels.empty()) c = spec.trunk_channels.back();
  }
  *channels = c;
  *hw = s;
}

double box_iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double ix = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double area_a = (a[2] - a[0]) * (a[3] - a[1]);
  const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace

DetectorSpec DetectorSpec::toy(int64_t num_classes) {
  DetectorSpec spec;
  spec.stages = {
      {"stage1", {{8, 2}, {8, 1}}},
      {"stage2", {{16, 2}, {16, 1}}},
      {"stage3", {{32, 2}, {32, 1}}},
  };
  spec.trunk_channels = {32, 32};
  spec.num_classes = num_classes;
  spec.latent_split = "stage3";
  spec.validate();
  return spec;
}

std::vector<std::string> DetectorSpec::boundaries() const {
  std::vector<std::string> b{"none"};
  for (const StageSpec& s : stages) b.push_back(s.name);
  b.push_back("trunk");
  return b;
}

int64_t DetectorSpec::boundary_index(const std::string& name) const {
  const auto b = boundaries();
  for (size_t i = 0; i < b.size(); ++i) {
    if (b[i] == name) return static_cast<int64_t>(i);
  }
  throw std::invalid_argument("unknown stage boundary '" + name + "'");
}

void DetectorSpec::validate() const {
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  if (stages.empty()) throw std::invalid_argument("detector needs at least one stage");
  std::set<std::string> names;
  int64_t downsample = 1;
  for (const StageSpec& s : stages) {
    if (s.name.empty() || s.name == "none" || s.name == "trunk") {
      throw std::invalid_argument("invalid stage name '" + s.name + "'");
    }
    if (!names.insert(s.name).second) {
      throw std::invalid_argument("duplicate stage name '" + s.name + "'");
    }
    if (s.convs.empty()) throw std::invalid_argument("stage '" + s.name + "' has no convs");
    for (const ConvSpec& c : s.convs) {
      if (c.out_channels < 1 || (c.stride != 1 && c.stride != 2)) {
        throw std::invalid_argument("invalid conv spec in stage '" + s.name + "'");
      }
      downsample *= c.stride;
    }
  }
  if (trunk_channels.empty()) throw std::invalid_argument("trunk needs at least one conv");
  if (input_size % downsample != 0 || input_size / downsample != grid) {
    throw std::invalid_argument("stage strides do not map " + std::to_string(input_size) +
                                " px to a " + std::to_string(grid) + "-cell grid");
  }
  boundary_index(latent_split);  // throws if the split names no boundary
}

std::string DetectorSpec::digest_string() const {
  std::ostringstream os;
  os << "cldet-v1 in=" << in_channels << "x" << input_size << " stages=";
  for (size_t i = 0; i < stages.size(); ++i) {
    if (i) os << ";";
    os << stages[i].name << ":";
    for (size_t j = 0; j < stages[i].convs.size(); ++j) {
      if (j) os << ",";
      os << stages[i].convs[j].out_channels << "s" << stages[i].convs[j].stride;
    }
  }
  os << " trunk=";
  for (size_t i = 0; i < trunk_channels.size(); ++i) {
    if (i) os << ",";
    os << trunk_channels[i];
  }
  os << " classes=" << num_classes << " grid=" << grid << " split=" << latent_split;
  return os.str();
}

bool Detector::is_trainable(const std::string& param_name) const {
  return param_block(spec, param_name) > spec.boundary_index(frozen_boundary);
}

Detector build_detector(const DetectorSpec& spec, uint64_t seed) {
  spec.validate();
  Detector d;
  d.spec = spec;
  SplitMix64 rng(seed);

  auto add_conv = [&](const std::string& name, int64_t cin, int64_t cout,
                      double bias_value) {
    d.params.emplace(name + ".weight",
                     ad::Tensor(ad::Shape{cout, cin, 3, 3},
                                kaiming_uniform(rng, cout * cin * 9, cin * 9)));
    d.params.emplace(name + ".bias", ad::Tensor::full({cout}, bias_value));
  };

  int64_t cin = spec.in_channels;
  for (const StageSpec& s : spec.stages) {
    for (size_t i = 0; i < s.convs.size(); ++i) {
      add_conv(s.name + ".conv" + std::to_string(i + 1), cin, s.convs[i].out_channels, 0.0);
      cin = s.convs[i].out_channels;
    }
  }
  for (size_t i = 0; i < spec.trunk_channels.size(); ++i) {
    add_conv("trunk.conv" + std::to_string(i + 1), cin, spec.trunk_channels[i], 0.0);
    cin = spec.trunk_channels[i];
  }
  add_conv("head.cls", cin, spec.num_classes, kNewClassBias);
  add_conv("head.box", cin, 4, 0.0);

  for (auto& [name, t] : d.params) {
    t = t.with_requires_grad(d.is_trainable(name));
  }
  return d;
}

std::map<std::string, ad::Tensor> bind_params(const Detector& d, ad::Tape& tape) {
  std::map<std::string, ad::Tensor> bound;
  for (const auto& [name, t] : d.params) {
    bound.emplace(name, t.requires_grad() ? tape.watch(t) : t);
  }
  return bound;
}

Latent latent_forward(const Detector& d, const ad::Tensor& images,
                      const std::map<std::string, ad::Tensor>* bound) {
  const DetectorSpec& spec = d.spec;
  if (images.rank() != 4 || images.dim(1) != spec.in_channels ||
      images.dim(2) != spec.input_size || images.dim(3) != spec.input_size) {
    throw std::invalid_argument("expected images [B," + std::to_string(spec.in_channels) +
                                "," + std::to_string(spec.input_size) + "," +
                                std::to_string(spec.input_size) + "], got " +
                                ad::shape_str(images.shape()));
  }
  const int64_t split = spec.boundary_index(spec.latent_split);
  ad::Tensor x = images;
  int64_t depth = 1;
  for (const StageSpec& s : spec.stages) {
    if (depth > split) break;
    for (size_t i = 0; i < s.convs.size(); ++i) {
      const std::string base = s.name + ".conv" + std::to_string(i + 1);
      x = conv_block(x, lookup(d, bound, base + ".weight"), lookup(d, bound, base + ".bias"),
                     s.convs[i].stride);
    }
    ++depth;
  }
  if (split > static_cast<int64_t>(spec.stages.size())) {  // split above the trunk
    for (size_t i = 0; i < spec.trunk_channels.size(); ++i) {
      const std::string base = "trunk.conv" + std::to_string(i + 1);
      x = conv_block(x, lookup(d, bound, base + ".weight"), lookup(d, bound, base + ".bias"),
                     1);
    }
  }
  return Latent{x, spec.latent_split};
}

HeadOutputs upper_forward(const Detector& d, const Latent& z,
                          const std::map<std::string, ad::Tensor>* bound) {
  const DetectorSpec& spec = d.spec;
  if (z.split_point != spec.latent_split) {
    throw std::invalid_argument("latent split '" + z.split_point +
                                "' does not match the detector's split '" +
                                spec.latent_split + "'");
  }
  const int64_t split = spec.boundary_index(spec.latent_split);
  int64_t want_c = 0, want_hw = 0;
  shape_at_boundary(spec, split, &want_c, &want_hw);
  if (z.features.rank() != 4 || z.features.dim(1) != want_c ||
      z.features.dim(2) != want_hw || z.features.dim(3) != want_hw) {
    throw std::invalid_argument("latent shape " + ad::shape_str(z.features.shape()) +
                                " does not match split '" + spec.latent_split + "'");
  }

  ad::Tensor x = z.features;
  for (int64_t si = split; si < static_cast<int64_t>(spec.stages.size()); ++si) {
    const StageSpec& s = spec.stages[static_cast<size_t>(si)];
    for (size_t i = 0; i < s.convs.size(); ++i) {
      const std::string base = s.name + ".conv" + std::to_string(i + 1);
      x = conv_block(x, lookup(d, bound, base + ".weight"), lookup(d, bound, base + ".bias"),
                     s.convs[i].stride);
    }
  }
  if (split <= static_cast<int64_t>(spec.stages.size())) {
    for (size_t i = 0; i < spec.trunk_channels.size(); ++i) {
      const std::string base = "trunk.conv" + std::to_string(i + 1);
      x = conv_block(x, lookup(d, bound, base + ".weight"), lookup(d, bound, base + ".bias"),
                     1);
    }
  }

  HeadOutputs out;
  out.trunk_features = x;
  out.class_logits = ad::channel_bias_add(
      ad::conv2d(x, lookup(d, bound, "head.cls.weight"), 1, 1),
      lookup(d, bound, "head.cls.bias"));
  out.box_regress = ad::relu(ad::channel_bias_add(
      ad::conv2d(x, lookup(d, bound, "head.box.weight"), 1, 1),
      lookup(d, bound, "head.box.bias")));
  return out;
}

HeadOutputs forward(const Detector& d, const ad::Tensor& images,
                    const std::map<std::string, ad::Tensor>* bound) {
  return upper_forward(d, latent_forward(d, images, bound), bound);
}

Detector expand_head(const Detector& d, int64_t k, uint64_t seed) {
  if (k < 1) throw std::invalid_argument("expand_head requires k >= 1, got " + std::to_string(k));
  Detector out = d;
  out.spec.num_classes += k;

  const ad::Tensor& w = d.params.at("head.cls.weight");
  const ad::Tensor& b = d.params.at("head.cls.bias");
  const int64_t c_old = w.dim(0), fin = w.dim(1);

  SplitMix64 rng(seed);
  std::vector<double> wv(w.data().begin(), w.data().end());
  const std::vector<double> fresh = kaiming_uniform(rng, k * fin * 9, fin * 9);
  wv.insert(wv.end(), fresh.begin(), fresh.end());
  std::vector<double> bv(b.data().begin(), b.data().end());
  bv.insert(bv.end(), static_cast<size_t>(k), kNewClassBias);

  out.params["head.cls.weight"] =
      ad::Tensor(ad::Shape{c_old + k, fin, 3, 3}, std::move(wv))
          .with_requires_grad(w.requires_grad());
  out.params["head.cls.bias"] =
      ad::Tensor(ad::Shape{c_old + k}, std::move(bv)).with_requires_grad(b.requires_grad());
  return out;
}

Detector set_freeze(const Detector& d, const std::string& boundary) {
  d.spec.boundary_index(boundary);  // validate
  Detector out = d;
  out.frozen_boundary = boundary;
  for (auto& [name, t] : out.params) {
    t = t.with_requires_grad(out.is_trainable(name));
  }
  return out;
}

int64_t total_param_count(const Detector& d) {
  int64_t n = 0;
  for (const auto& [name, t] : d.params) n += t.numel();
  return n;
}

int64_t trainable_param_count(const Detector& d) {
  int64_t n = 0;
  for (const auto& [name, t] : d.params) {
    if (t.requires_grad()) n += t.numel();
  }
  return n;
}

std::vector<std::vector<Detection>> decode_detections(const HeadOutputs& out,
                                                      double score_thr, double nms_iou,
                                                      int64_t stride) {
  if (score_thr <= 0.0 || score_thr >= 1.0 || nms_iou <= 0.0 || nms_iou >= 1.0) {
    throw std::invalid_argument("decode thresholds must lie in (0,1)");
  }
  const int64_t batch = out.class_logits.dim(0);
  const int64_t classes = out.class_logits.dim(1);
  const int64_t s = out.class_logits.dim(2);

  std::vector<std::vector<Detection>> result(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b) {
    std::vector<Detection>& dets = result[static_cast<size_t>(b)];
    for (int64_t c = 0; c < classes; ++c) {
      std::vector<Detection> cand;
      for (int64_t i = 0; i < s; ++i) {
        for (int64_t j = 0; j < s; ++j) {
          const double logit = out.class_logits.at({b, c, i, j});
          const double score =
              logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit))
                           : std::exp(logit) / (1.0 + std::exp(logit));
          if (score <= score_thr) continue;
          const double cx = (static_cast<double>(j) + 0.5) * static_cast<double>(stride);
          const double cy = (static_cast<double>(i) + 0.5) * static_cast<double>(stride);
          Detection det;
          det.class_id = c + 1;
          det.score = score;
          det.box = {cx - out.box_regress.at({b, 0, i, j}),
                     cy - out.box_regress.at({b, 1, i, j}),
                     cx + out.box_regress.at({b, 2, i, j}),
                     cy + out.box_regress.at({b, 3, i, j})};
          cand.push_back(det);
        }
      }
      // Stable candidate order: score descending, then cell scan order, which
      // std::sort cannot perturb because the pre-sort order is scan order.
      std::stable_sort(cand.begin(), cand.end(),
                       [](const Detection& a, const Detection& b) { return a.score > b.score; });
      for (const Detection& det : cand) {
        bool keep = true;
        for (const Detection& kept : dets) {
          if (kept.class_id == det.class_id && box_iou(kept.box, det.box) > nms_iou) {
            keep = false;
            break;
          }
        }
        if (keep) dets.push_back(det);
      }
    }
  }
  return result;
}

}  // namespace cldet::det
