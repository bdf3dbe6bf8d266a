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
#include <algorithm>
#include <cstring>
#include <map>
#include <set>
#include <vector>

#include "cldet/data/scenario.hpp"
#include "doctest.h"

namespace data = cldet::data;
using data::BoxAnnotation;
using data::Dataset;
using data::ScenarioSpec;
using data::TaskDataset;

namespace {

double iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double ix = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double uni = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

bool same_pixels(const data::Sample& a, const data::Sample& b) {
  return std::memcmp(a.image.raw(), b.image.raw(),
                     static_cast<size_t>(a.image.numel()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("scenario strings parse to class counts") {
  CHECK(ScenarioSpec::parse("8").counts == std::vector<int64_t>{8});
  CHECK(ScenarioSpec::parse("4p4").counts == std::vector<int64_t>{4, 4});
  CHECK(ScenarioSpec::parse("6p2").counts == std::vector<int64_t>{6, 2});
  CHECK(ScenarioSpec::parse("7p1").counts == std::vector<int64_t>{7, 1});
  CHECK(ScenarioSpec::parse("4p1x4").counts == std::vector<int64_t>{4, 1, 1, 1, 1});
  CHECK(ScenarioSpec::parse("2p2p2").counts == std::vector<int64_t>{2, 2, 2});
  CHECK(ScenarioSpec::parse("4p1x4").str() == "4p1p1p1p1");
  CHECK(ScenarioSpec::parse("4p4").total_classes() == 8);

  for (const char* bad : {"", "p4", "4p", "0p4", "4x", "x3", "4p-1", "foo", "4pp4", "1x0"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(ScenarioSpec::parse(bad), std::invalid_argument);
  }
}

TEST_CASE("generation is deterministic and prefix-stable") {
  Dataset a = data::generate_dataset(12, 8, 42);
  Dataset b = data::generate_dataset(12, 8, 42);
  Dataset prefix = data::generate_dataset(5, 8, 42);
  Dataset other = data::generate_dataset(12, 8, 43);
  REQUIRE(a.samples.size() == 12);
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(same_pixels(a.samples[i], b.samples[i]));
    REQUIRE(a.samples[i].boxes.size() == b.samples[i].boxes.size());
  }
  // Image i depends only on (seed, i), so shorter runs are prefixes.
  for (size_t i = 0; i < prefix.samples.size(); ++i) {
    CHECK(same_pixels(a.samples[i], prefix.samples[i]));
  }
  bool any_diff = false;
  for (size_t i = 0; i < a.samples.size(); ++i) {
    if (!same_pixels(a.samples[i], other.samples[i])) any_diff = true;
  }
  CHECK(any_diff);

  CHECK_THROWS_AS(data::generate_dataset(10, 9, 1), std::invalid_argument);
  CHECK_THROWS_AS(data::generate_dataset(10, 0, 1), std::invalid_argument);
}

TEST_CASE("generated scenes respect the placement and pixel contracts") {
  Dataset ds = data::generate_dataset(300, 8, 7);
  for (const data::Sample& s : ds.samples) {
    REQUIRE(!s.boxes.empty());
    CHECK(s.boxes.size() <= 3);
    for (double v : s.image.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (const BoxAnnotation& b : s.boxes) {
      CHECK(b.class_id >= 1);
      CHECK(b.class_id <= 8);
      CHECK(b.box[0] >= 0.0);
      CHECK(b.box[1] >= 0.0);
      CHECK(b.box[2] <= 64.0);
      CHECK(b.box[3] <= 64.0);
      CHECK(b.box[2] > b.box[0]);
      CHECK(b.box[3] > b.box[1]);
    }
    for (size_t i = 0; i < s.boxes.size(); ++i) {
      for (size_t j = i + 1; j < s.boxes.size(); ++j) {
        CHECK(iou(s.boxes[i].box, s.boxes[j].box) <= 0.3);
      }
    }
  }
}

TEST_CASE("class frequencies stay within 20 percent of uniform") {
  Dataset ds = data::generate_dataset(1000, 8, 2026);
  std::map<int64_t, int64_t> counts;
  int64_t total = 0;
  for (const data::Sample& s : ds.samples) {
    for (const BoxAnnotation& b : s.boxes) {
      ++counts[b.class_id];
      ++total;
    }
  }
  REQUIRE(counts.size() == 8);
  const double mean = static_cast<double>(total) / 8.0;
  for (const auto& [cls, n] : counts) {
    CAPTURE(cls);
    CHECK(static_cast<double>(n) >= 0.8 * mean);
    CHECK(static_cast<double>(n) <= 1.2 * mean);
  }
}

TEST_CASE("single-task split reproduces the whole dataset") {
  Dataset ds = data::generate_dataset(100, 8, 3);
  data::TaskSequence seq = data::split_tasks(ds, ScenarioSpec::parse("8"));
  REQUIRE(seq.size() == 1);
  const TaskDataset& t = seq[0];
  CHECK(t.first_class == 1);
  CHECK(t.last_class == 8);
  REQUIRE(t.samples.size() == ds.samples.size());
  for (size_t i = 0; i < t.samples.size(); ++i) {
    CHECK(t.image_ids[i] == static_cast<int64_t>(i));
    CHECK(t.samples[i].boxes.size() == ds.samples[i].boxes.size());
  }
}

TEST_CASE("task annotations never leak labels across ranges") {
  Dataset ds = data::generate_dataset(400, 8, 11);
  for (const char* scenario : {"4p4", "6p2", "7p1", "4p1x4"}) {
    CAPTURE(scenario);
    data::TaskSequence seq = data::split_tasks(ds, ScenarioSpec::parse(scenario));
    for (const TaskDataset& t : seq) {
      for (const data::Sample& s : t.samples) {
        REQUIRE(!s.boxes.empty());
        for (const BoxAnnotation& b : s.boxes) {
          CHECK(b.class_id >= t.first_class);
          CHECK(b.class_id <= t.last_class);
        }
      }
    }
  }
}

TEST_CASE("split membership matches a brute-force scan of full annotations") {
  Dataset ds = data::generate_dataset(1000, 8, 17);
  data::TaskSequence seq = data::split_tasks(ds, ScenarioSpec::parse("4p1x4"));
  REQUIRE(seq.size() == 5);
  int64_t first = 1;
  const std::vector<int64_t> counts{4, 1, 1, 1, 1};
  for (size_t n = 0; n < seq.size(); ++n) {
    const int64_t last = first + counts[n] - 1;
    std::vector<int64_t> expected;
    for (size_t i = 0; i < ds.samples.size(); ++i) {
      bool visible = false;
      for (const BoxAnnotation& b : ds.samples[i].boxes) {
        if (b.class_id >= first && b.class_id <= last) visible = true;
      }
      if (visible) expected.push_back(static_cast<int64_t>(i));
    }
    CAPTURE(n);
    CHECK(seq[n].image_ids == expected);
    // Oracle copies of the unfiltered annotations travel with the task.
    for (size_t k = 0; k < seq[n].image_ids.size(); ++k) {
      const auto& kept = seq[n].full_annotations[k];
      const auto& src = ds.samples[static_cast<size_t>(seq[n].image_ids[k])].boxes;
      CHECK(kept.size() == src.size());
    }
    first = last + 1;
  }

  CHECK_THROWS_AS(data::split_tasks(ds, ScenarioSpec::parse("5p4")), std::invalid_argument);
}

TEST_CASE("two-task splits exhibit unlabeled old-class background") {
  Dataset ds = data::generate_dataset(400, 8, 11);
  data::TaskSequence seq = data::split_tasks(ds, ScenarioSpec::parse("4p4"));
  REQUIRE(seq.size() == 2);
  int hidden_old = 0;
  for (size_t k = 0; k < seq[1].samples.size(); ++k) {
    for (const BoxAnnotation& b : seq[1].full_annotations[k]) {
      if (b.class_id <= 4) ++hidden_old;
    }
  }
  // Old-class objects are present in later-task images but carry no label.
  CHECK(hidden_old > 0);
  for (const data::Sample& s : seq[1].samples) {
    for (const BoxAnnotation& b : s.boxes) CHECK(b.class_id > 4);
  }
}

TEST_CASE("batch_iter shuffles deterministically and covers the task") {
  Dataset ds = data::generate_dataset(45, 8, 23);
  data::TaskSequence seq = data::split_tasks(ds, ScenarioSpec::parse("8"));
  const TaskDataset& t = seq[0];

  auto b1 = data::batch_iter(t, 16, 5);
  auto b2 = data::batch_iter(t, 16, 5);
  auto b3 = data::batch_iter(t, 16, 6);
  CHECK(b1 == b2);
  CHECK(b1 != b3);
  REQUIRE(b1.size() == 3);
  CHECK(b1[0].size() == 16);
  CHECK(b1[1].size() == 16);
  CHECK(b1[2].size() == 13);  // last partial batch kept

  std::multiset<int64_t> seen;
  for (const auto& batch : b1) seen.insert(batch.begin(), batch.end());
  std::multiset<int64_t> expected;
  for (int64_t i = 0; i < 45; ++i) expected.insert(i);
  CHECK(seen == expected);

  auto whole = data::batch_iter(t, 100, 9);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].size() == 45);

  CHECK_THROWS_AS(data::batch_iter(t, 0, 1), std::invalid_argument);
  TaskDataset empty;
  CHECK_THROWS_AS(data::batch_iter(empty, 4, 1), std::invalid_argument);
}

TEST_CASE("export and load round-trip the dataset exactly") {
  Dataset ds = data::generate_dataset(20, 6, 99);
  const std::string dir = "/tmp/cldet_test_dataset";
  data::export_dataset(dir, ds);
  Dataset back = data::load_dataset(dir);
  CHECK(back.num_classes == 6);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(same_pixels(ds.samples[i], back.samples[i]));
    REQUIRE(back.samples[i].boxes.size() == ds.samples[i].boxes.size());
    for (size_t k = 0; k < ds.samples[i].boxes.size(); ++k) {
      CHECK(back.samples[i].boxes[k].class_id == ds.samples[i].boxes[k].class_id);
      CHECK(back.samples[i].boxes[k].box == ds.samples[i].boxes[k].box);
    }
  }
  CHECK_THROWS_AS(data::load_dataset("/tmp/cldet_no_such_dir"), std::runtime_error);
}
