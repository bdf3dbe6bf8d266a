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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "cldet/ad/ops.hpp"
#include "cldet/det/checkpoint.hpp"
#include "cldet/det/detector.hpp"
#include "cldet/rng.hpp"
#include "doctest.h"

namespace ad = cldet::ad;
namespace det = cldet::det;
using ad::Shape;
using ad::Tensor;
using cldet::SplitMix64;

namespace {

Tensor random_images(uint64_t seed, int64_t batch) {
  SplitMix64 rng(seed);
  std::vector<double> v(static_cast<size_t>(batch * 3 * 64 * 64));
  for (double& x : v) x = rng.uniform();
  return Tensor(Shape{batch, 3, 64, 64}, std::move(v));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.raw(), b.raw(), static_cast<size_t>(a.numel()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("build_detector is deterministic and seed-sensitive") {
  const det::DetectorSpec spec = det::DetectorSpec::toy(4);
  det::Detector a = det::build_detector(spec, 11);
  det::Detector b = det::build_detector(spec, 11);
  det::Detector c = det::build_detector(spec, 12);
  REQUIRE(a.params.size() == b.params.size());
  for (const auto& [name, t] : a.params) {
    CHECK(bitwise_equal(t, b.params.at(name)));
  }
  bool any_diff = false;
  for (const auto& [name, t] : a.params) {
    if (!bitwise_equal(t, c.params.at(name))) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("spec validation rejects malformed configurations") {
  CHECK_THROWS_AS(det::DetectorSpec::toy(0), std::invalid_argument);
  det::DetectorSpec s = det::DetectorSpec::toy(4);
  s.latent_split = "stage9";
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  det::DetectorSpec dup = det::DetectorSpec::toy(4);
  dup.stages[1].name = "stage1";
  CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
  CHECK_THROWS_AS(det::DetectorSpec::toy(4).boundary_index("nowhere"),
                  std::invalid_argument);
}

TEST_CASE("toy detector has the documented shape and cost structure") {
  const det::DetectorSpec spec = det::DetectorSpec::toy(8);
  CHECK(spec.boundaries() ==
        std::vector<std::string>{"none", "stage1", "stage2", "stage3", "trunk"});
  CHECK(spec.cell_stride() == 8);
  det::Detector d = det::build_detector(spec, 1);
  // Hand-counted: stages 808+3488+13888, trunk 18496, heads (8+4)*289 elements-ish.
  const int64_t head_cls = 8 * 32 * 9 + 8;
  const int64_t head_box = 4 * 32 * 9 + 4;
  CHECK(det::total_param_count(d) == 808 + 3488 + 13888 + 18496 + head_cls + head_box);
  CHECK(det::trainable_param_count(d) == det::total_param_count(d));
}

TEST_CASE("forward produces head shapes and equals latent/upper composition") {
  det::Detector d = det::build_detector(det::DetectorSpec::toy(5), 3);
  Tensor x = random_images(77, 2);
  det::HeadOutputs full = det::forward(d, x);
  CHECK(full.class_logits.shape() == Shape{2, 5, 8, 8});
  CHECK(full.box_regress.shape() == Shape{2, 4, 8, 8});
  CHECK(full.trunk_features.shape() == Shape{2, 32, 8, 8});

  for (const std::string& split : d.spec.boundaries()) {
    det::Detector ds = d;
    ds.spec.latent_split = split;
    det::Latent z = det::latent_forward(ds, x);
    det::HeadOutputs composed = det::upper_forward(ds, z);
    CAPTURE(split);
    CHECK(bitwise_equal(composed.class_logits, full.class_logits));
    CHECK(bitwise_equal(composed.box_regress, full.box_regress));
    CHECK(bitwise_equal(composed.trunk_features, full.trunk_features));
    if (split == "none") CHECK(bitwise_equal(z.features, x));
    if (split == "stage3") CHECK(z.features.shape() == Shape{2, 32, 8, 8});
  }

  CHECK_THROWS_AS(det::forward(d, Tensor::zeros({1, 3, 32, 32})), std::invalid_argument);
}

TEST_CASE("zero image yields bias-only logits and zero boxes") {
  det::Detector d = det::build_detector(det::DetectorSpec::toy(3), 5);
  det::HeadOutputs out = det::forward(d, Tensor::zeros({1, 3, 64, 64}));
  for (double v : out.class_logits.data()) CHECK(v == -4.0);
  for (double v : out.box_regress.data()) CHECK(v == 0.0);
}

TEST_CASE("batch forward equals concatenated single-image forwards") {
  det::Detector d = det::build_detector(det::DetectorSpec::toy(4), 9);
  Tensor batch = random_images(5, 2);
  std::vector<double> img0(batch.raw(), batch.raw() + 3 * 64 * 64);
  std::vector<double> img1(batch.raw() + 3 * 64 * 64, batch.raw() + 2 * 3 * 64 * 64);
  det::HeadOutputs both = det::forward(d, batch);
  det::HeadOutputs first = det::forward(d, Tensor(Shape{1, 3, 64, 64}, img0));
  det::HeadOutputs second = det::forward(d, Tensor(Shape{1, 3, 64, 64}, img1));
  const int64_t n = first.class_logits.numel();
  CHECK(std::memcmp(both.class_logits.raw(), first.class_logits.raw(),
                    static_cast<size_t>(n) * sizeof(double)) == 0);
  CHECK(std::memcmp(both.class_logits.raw() + n, second.class_logits.raw(),
                    static_cast<size_t>(n) * sizeof(double)) == 0);
}

TEST_CASE("frozen split keeps the latent off the tape during training binds") {
  det::Detector d = det::build_detector(det::DetectorSpec::toy(4), 2);
  d = det::set_freeze(d, "stage3");
  ad::Tape tape;
  auto bound = det::bind_params(d, tape);
  Tensor x = random_images(8, 1);
  det::Latent z = det::latent_forward(d, x, &bound);
  CHECK(!z.features.on_tape());
  CHECK(!z.features.requires_grad());
  det::HeadOutputs out = det::upper_forward(d, z, &bound);
  CHECK(out.class_logits.on_tape());  // upper layers are trainable
}

TEST_CASE("upper_forward rejects mismatched latents") {
  det::Detector d = det::build_detector(det::DetectorSpec::toy(4), 2);
  det::Latent wrong_split{Tensor::zeros({1, 32, 8, 8}), "stage2"};
  CHECK_THROWS_AS(det::upper_forward(d, wrong_split), std::invalid_argument);
  det::Latent wrong_shape{Tensor::zeros({1, 16, 8, 8}), "stage3"};
  CHECK_THROWS_AS(det::upper_forward(d, wrong_shape), std::invalid_argument);
}

TEST_CASE("expand_head appends channels without disturbing existing ones") {
  det::Detector d = det::build_detector(det::DetectorSpec::toy(4), 21);
  Tensor x = random_images(31, 2);
  det::HeadOutputs before = det::forward(d, x);

  CHECK_THROWS_AS(det::expand_head(d, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(det::expand_head(d, -2, 1), std::invalid_argument);

  det::Detector e = det::expand_head(d, 2, 99);
  CHECK(e.spec.num_classes == 6);
  CHECK(e.params.at("head.cls.weight").dim(0) == 6);
  det::HeadOutputs after = det::forward(e, x);
  CHECK(bitwise_equal(ad::narrow(after.class_logits, 1, 0, 4), before.class_logits));
  CHECK(bitwise_equal(after.box_regress, before.box_regress));

  // New channels sit at bias -4 on a zero image: sigmoid(-4) = 0.01798...
  det::HeadOutputs zero_out = det::forward(e, Tensor::zeros({1, 3, 64, 64}));
  const double p = 1.0 / (1.0 + std::exp(4.0));
  for (int64_t i = 0; i < 8; ++i) {
    for (int64_t j = 0; j < 8; ++j) {
      const double logit = zero_out.class_logits.at({0, 5, i, j});
      CHECK(1.0 / (1.0 + std::exp(-logit)) == doctest::Approx(p).epsilon(1e-12));
    }
  }

  // Determinism of the new rows.
  det::Detector e2 = det::expand_head(d, 2, 99);
  CHECK(bitwise_equal(e.params.at("head.cls.weight"), e2.params.at("head.cls.weight")));
}

TEST_CASE("set_freeze trainable counts strictly decrease up the boundary list") {
  det::Detector d = det::build_detector(det::DetectorSpec::toy(4), 5);
  const int64_t total = det::total_param_count(d);
  int64_t prev = total + 1;
  for (const std::string& b : d.spec.boundaries()) {
    det::Detector f = det::set_freeze(d, b);
    const int64_t trainable = det::trainable_param_count(f);
    CAPTURE(b);
    CHECK(trainable < prev);
    if (b == "none") CHECK(trainable == total);
    if (b == "stage3") {
      const int64_t upper = 18496 + (4 * 32 * 9 + 4) * 2;  // trunk + both heads (C=4)
      CHECK(trainable == upper);
    }
    if (b == "trunk") CHECK(trainable == (4 * 32 * 9 + 4) * 2);
    prev = trainable;
  }
  CHECK_THROWS_AS(det::set_freeze(d, "stage7"), std::invalid_argument);
}

TEST_CASE("decode_detections anchors, thresholds and suppresses as documented") {
  // Hand-built 2-class head output on the 8x8 grid.
  std::vector<double> logits(2 * 8 * 8, -20.0);
  std::vector<double> boxes(4 * 8 * 8, 0.0);
  auto at = [](int64_t c, int64_t i, int64_t j) { return (c * 8 + i) * 8 + j; };

  SUBCASE("everything below threshold decodes to nothing") {
    det::HeadOutputs out{Tensor(Shape{1, 2, 8, 8}, logits), Tensor(Shape{1, 4, 8, 8}, boxes),
                         Tensor::zeros({1, 1, 8, 8})};
    auto dets = det::decode_detections(out, 0.3, 0.6);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].empty());
  }

  SUBCASE("a single hot cell produces the hand-computed box") {
    logits[at(1, 2, 3)] = 3.0;  // class id 2, cell i=2, j=3
    boxes[at(0, 2, 3)] = 2.0;   // l
    boxes[at(1, 2, 3)] = 3.0;   // t
    boxes[at(2, 2, 3)] = 4.0;   // r
    boxes[at(3, 2, 3)] = 5.0;   // b
    det::HeadOutputs out{Tensor(Shape{1, 2, 8, 8}, logits), Tensor(Shape{1, 4, 8, 8}, boxes),
                         Tensor::zeros({1, 1, 8, 8})};
    auto dets = det::decode_detections(out, 0.3, 0.6);
    REQUIRE(dets[0].size() == 1);
    const det::Detection& det0 = dets[0][0];
    CHECK(det0.class_id == 2);
    // anchor ((3+0.5)*8, (2+0.5)*8) = (28, 20)
    CHECK(det0.box[0] == doctest::Approx(26.0));
    CHECK(det0.box[1] == doctest::Approx(17.0));
    CHECK(det0.box[2] == doctest::Approx(32.0));
    CHECK(det0.box[3] == doctest::Approx(25.0));
    CHECK(det0.score == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))));
  }

  SUBCASE("identical boxes of one class collapse to the higher score") {
    logits[at(0, 1, 1)] = 2.0;
    logits[at(0, 1, 2)] = 3.0;
    // Same absolute box from two neighboring cells.
    boxes[at(0, 1, 1)] = 2.0; boxes[at(1, 1, 1)] = 2.0;
    boxes[at(2, 1, 1)] = 6.0; boxes[at(3, 1, 1)] = 6.0;
    boxes[at(0, 1, 2)] = 10.0; boxes[at(1, 1, 2)] = 2.0;
    boxes[at(2, 1, 2)] = -2.0 + 0.0; boxes[at(3, 1, 2)] = 6.0;
    // cell (1,1) anchor (12,12): box (10,10,18,18)
    // cell (1,2) anchor (20,12): box (10,10,18,18) needs l=10,r=-2 -> relu would
    // forbid negatives in production; decode itself is activation-agnostic.
    det::HeadOutputs out{Tensor(Shape{1, 2, 8, 8}, logits), Tensor(Shape{1, 4, 8, 8}, boxes),
                         Tensor::zeros({1, 1, 8, 8})};
    auto dets = det::decode_detections(out, 0.3, 0.6);
    REQUIRE(dets[0].size() == 1);
    CHECK(dets[0][0].score == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))));
    CHECK(dets[0][0].box[0] == doctest::Approx(10.0));
  }

  SUBCASE("threshold validation") {
    det::HeadOutputs out{Tensor(Shape{1, 2, 8, 8}, logits), Tensor(Shape{1, 4, 8, 8}, boxes),
                         Tensor::zeros({1, 1, 8, 8})};
    CHECK_THROWS_AS(det::decode_detections(out, 0.0, 0.6), std::invalid_argument);
    CHECK_THROWS_AS(det::decode_detections(out, 0.3, 1.0), std::invalid_argument);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact and rejects damage") {
  det::Detector d = det::build_detector(det::DetectorSpec::toy(4), 77);
  d = det::expand_head(d, 1, 5);
  d = det::set_freeze(d, "stage2");
  const std::string path = "/tmp/cldet_test_ckpt.bin";
  nlohmann::json meta;
  meta["task_index"] = 3;
  det::save_detector(path, d, meta);

  nlohmann::json loaded_meta;
  det::Detector l = det::load_detector(path, &loaded_meta);
  CHECK(loaded_meta.at("task_index").get<int>() == 3);
  CHECK(l.frozen_boundary == "stage2");
  CHECK(l.spec.num_classes == 5);
  REQUIRE(l.params.size() == d.params.size());
  for (const auto& [name, t] : d.params) {
    CAPTURE(name);
    CHECK(bitwise_equal(t, l.params.at(name)));
    CHECK(l.params.at(name).requires_grad() == t.requires_grad());
  }
  Tensor x = random_images(123, 1);
  CHECK(bitwise_equal(det::forward(d, x).class_logits, det::forward(l, x).class_logits));

  SUBCASE("truncation is detected") {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f != nullptr);
    std::fseek(f, 0, SEEK_END);
    const long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<char> bytes(static_cast<size_t>(size));
    REQUIRE(std::fread(bytes.data(), 1, bytes.size(), f) == bytes.size());
    std::fclose(f);
    const std::string cut = "/tmp/cldet_test_ckpt_cut.bin";
    std::FILE* g = std::fopen(cut.c_str(), "wb");
    std::fwrite(bytes.data(), 1, bytes.size() / 2, g);
    std::fclose(g);
    CHECK_THROWS_AS(det::load_detector(cut), std::runtime_error);
  }

  SUBCASE("wrong magic is detected") {
    const std::string bad = "/tmp/cldet_test_ckpt_bad.bin";
    std::FILE* g = std::fopen(bad.c_str(), "wb");
    std::fputs("NOTACKPTxxxxxxxxxxxxxxxx", g);
    std::fclose(g);
    CHECK_THROWS_AS(det::load_detector(bad), std::runtime_error);
  }
}

TEST_CASE("generic checkpoint container round-trips arbitrary tensor sets") {
  det::CheckpointData data;
  data.meta = {{"note", "roundtrip"}, {"count", 2}};
  SplitMix64 rng(4);
  std::vector<double> v1(24), v2(7);
  for (double& x : v1) x = rng.uniform(-9, 9);
  for (double& x : v2) x = rng.uniform(-9, 9);
  data.tensors.emplace_back("alpha", Tensor(Shape{2, 3, 4}, v1));
  data.tensors.emplace_back("beta", Tensor(Shape{7}, v2));
  const std::string path = "/tmp/cldet_test_container.bin";
  det::write_checkpoint(path, data);
  det::CheckpointData back = det::read_checkpoint(path);
  CHECK(back.meta == data.meta);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].first == "alpha");
  CHECK(bitwise_equal(back.tensors[0].second, data.tensors[0].second));
  CHECK(bitwise_equal(back.tensors[1].second, data.tensors[1].second));
}
