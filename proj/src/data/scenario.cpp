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
#include "cldet/data/scenario.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cldet/rng.hpp"
#include "json.hpp"

namespace cldet::data {
namespace {

constexpr int64_t kCanvas = 64;
constexpr int64_t kMaxClasses = 8;
constexpr double kMinRadius = 6.0;
constexpr double kMaxRadius = 12.0;
constexpr double kMaxPlacementIoU = 0.3;
constexpr int kPlacementTries = 16;

bool in_circle(double dx, double dy, double r) { return dx * dx + dy * dy <= r * r; }
bool in_square(double dx, double dy, double r) {
  return std::fabs(dx) <= r * 0.82 && std::fabs(dy) <= r * 0.82;
}
bool in_triangle(double dx, double dy, double r) {
  return dy >= -r && dy <= r && std::fabs(dx) <= (dy + r) * 0.5;
}
bool in_cross(double dx, double dy, double r) {
  return std::max(std::fabs(dx), std::fabs(dy)) <= r &&
         std::fabs(std::fabs(dx) - std::fabs(dy)) <= r * 0.28;
}
bool in_ring(double dx, double dy, double r) {
  const double d2 = dx * dx + dy * dy;
  const double inner = 0.55 * r;
  return d2 <= r * r && d2 >= inner * inner;
}
bool in_bar(double dx, double dy, double r) {
  return std::fabs(dx) <= r && std::fabs(dy) <= r * 0.35;
}
bool in_diamond(double dx, double dy, double r) { return std::fabs(dx) + std::fabs(dy) <= r; }
bool in_plus(double dx, double dy, double r) {
  return (std::fabs(dx) <= r * 0.3 && std::fabs(dy) <= r) ||
         (std::fabs(dy) <= r * 0.3 && std::fabs(dx) <= r);
}

using MaskFn = bool (*)(double, double, double);

struct ShapeDef {
  const char* name;
  MaskFn inside;
};

constexpr ShapeDef kShapes[kMaxClasses] = {
    {"circle", in_circle}, {"square", in_square},   {"triangle", in_triangle},
    {"cross", in_cross},   {"ring", in_ring},       {"bar", in_bar},
    {"diamond", in_diamond}, {"plus", in_plus},
};

double iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double ix = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double area_a = (a[2] - a[0]) * (a[3] - a[1]);
  const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Pixels covered by a shape instance, with the tight box around them.
struct Raster {
  std::vector<std::pair<int64_t, int64_t>> pixels;  // (y, x)
  std::array<double, 4> tight_box{};
};

bool rasterize(MaskFn inside, double cx, double cy, double r, Raster* out) {
  out->pixels.clear();
  int64_t min_x = kCanvas, min_y = kCanvas, max_x = -1, max_y = -1;
  const int64_t y_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cy - r)));
  const int64_t y_hi = std::min<int64_t>(kCanvas - 1, static_cast<int64_t>(std::ceil(cy + r)));
  const int64_t x_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cx - r)));
  const int64_t x_hi = std::min<int64_t>(kCanvas - 1, static_cast<int64_t>(std::ceil(cx + r)));
  for (int64_t y = y_lo; y <= y_hi; ++y) {
    for (int64_t x = x_lo; x <= x_hi; ++x) {
      if (!inside(x + 0.5 - cx, y + 0.5 - cy, r)) continue;
      out->pixels.emplace_back(y, x);
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  if (out->pixels.empty()) return false;
  out->tight_box = {static_cast<double>(min_x), static_cast<double>(min_y),
                    static_cast<double>(max_x + 1), static_cast<double>(max_y + 1)};
  return true;
}

Sample render_scene(uint64_t scene_seed, int64_t num_classes) {
  SplitMix64 rng(scene_seed);
  std::vector<double> pix(static_cast<size_t>(3 * kCanvas * kCanvas));
  for (int64_t c = 0; c < 3; ++c) {
    const double bg = rng.uniform(0.0, 0.15);
    std::fill_n(pix.begin() + c * kCanvas * kCanvas, kCanvas * kCanvas, bg);
  }

  Sample sample;
  const int64_t num_objects = rng.uniform_int(1, 3);
  Raster raster;
  for (int64_t obj = 0; obj < num_objects; ++obj) {
    const int64_t class_id = rng.uniform_int(1, num_classes);
    std::array<double, 3> color{};
    for (double& ch : color) ch = rng.uniform(0.3, 1.0);
    const MaskFn inside = kShapes[class_id - 1].inside;

    for (int attempt = 0; attempt < kPlacementTries; ++attempt) {
      const double r = rng.uniform(kMinRadius, kMaxRadius);
      const double cx = rng.uniform(r, kCanvas - r);
      const double cy = rng.uniform(r, kCanvas - r);
      if (!rasterize(inside, cx, cy, r, &raster)) continue;
      bool crowded = false;
      for (const BoxAnnotation& placed : sample.boxes) {
        if (iou(raster.tight_box, placed.box) > kMaxPlacementIoU) {
          crowded = true;
          break;
        }
      }
      if (crowded) continue;
      for (const auto& [y, x] : raster.pixels) {
        for (int64_t c = 0; c < 3; ++c) {
          pix[static_cast<size_t>((c * kCanvas + y) * kCanvas + x)] = color[c];
        }
      }
      sample.boxes.push_back(BoxAnnotation{class_id, raster.tight_box});
      break;
    }
  }
  sample.image = ad::Tensor(ad::Shape{3, kCanvas, kCanvas}, std::move(pix));
  return sample;
}

}  // namespace

const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const ShapeDef& s : kShapes) v.emplace_back(s.name);
    return v;
  }();
  return names;
}

ScenarioSpec ScenarioSpec::parse(const std::string& text) {
  auto fail = [&text]() -> void {
    throw std::invalid_argument("bad scenario '" + text + "': expected counts like 8, 4p4 or 4p1x4");
  };
  if (text.empty() || text.back() == 'p') fail();
  ScenarioSpec spec;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, 'p')) {
    int64_t count = 0;
    int64_t repeat = 1;
    const size_t x = token.find('x');
    try {
      size_t used = 0;
      count = std::stoll(token.substr(0, x), &used);
      if (used != (x == std::string::npos ? token.size() : x)) fail();
      if (x != std::string::npos) {
        repeat = std::stoll(token.substr(x + 1), &used);
        if (used != token.size() - x - 1) fail();
      }
    } catch (const std::invalid_argument&) {
      fail();
    } catch (const std::out_of_range&) {
      fail();
    }
    if (count < 1 || repeat < 1) fail();
    for (int64_t i = 0; i < repeat; ++i) spec.counts.push_back(count);
  }
  if (spec.counts.empty()) fail();
  return spec;
}

int64_t ScenarioSpec::total_classes() const {
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  return total;
}

std::string ScenarioSpec::str() const {
  std::string s;
  for (size_t i = 0; i < counts.size(); ++i) {
    if (i) s += 'p';
    s += std::to_string(counts[i]);
  }
  return s;
}

Dataset generate_dataset(int64_t num_images, int64_t num_classes, uint64_t seed) {
  if (num_classes < 1 || num_classes > kMaxClasses) {
    throw std::invalid_argument("num_classes must be in [1," + std::to_string(kMaxClasses) +
                                "], got " + std::to_string(num_classes));
  }
  if (num_images < 0) throw std::invalid_argument("num_images must be >= 0");
  Dataset ds;
  ds.num_classes = num_classes;
  ds.image_size = kCanvas;
  ds.samples.reserve(static_cast<size_t>(num_images));
  for (int64_t i = 0; i < num_images; ++i) {
    ds.samples.push_back(render_scene(seed ^ static_cast<uint64_t>(i), num_classes));
  }
  return ds;
}

TaskSequence split_tasks(const Dataset& ds, const ScenarioSpec& scenario) {
  if (scenario.counts.empty()) throw std::invalid_argument("scenario has no tasks");
  if (scenario.total_classes() > ds.num_classes) {
    throw std::invalid_argument("scenario needs " + std::to_string(scenario.total_classes()) +
                                " classes but dataset has " + std::to_string(ds.num_classes));
  }
  TaskSequence tasks;
  int64_t first = 1;
  for (size_t n = 0; n < scenario.counts.size(); ++n) {
    TaskDataset task;
    task.task_index = static_cast<int64_t>(n);
    task.first_class = first;
    task.last_class = first + scenario.counts[n] - 1;
    for (size_t i = 0; i < ds.samples.size(); ++i) {
      const Sample& src = ds.samples[i];
      std::vector<BoxAnnotation> visible;
      for (const BoxAnnotation& b : src.boxes) {
        if (b.class_id >= task.first_class && b.class_id <= task.last_class) {
          visible.push_back(b);
        }
      }
      if (visible.empty()) continue;
      task.image_ids.push_back(static_cast<int64_t>(i));
      task.samples.push_back(Sample{src.image, std::move(visible)});
      task.full_annotations.push_back(src.boxes);
    }
    first = task.last_class + 1;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::vector<std::vector<int64_t>> batch_iter(const TaskDataset& task, int64_t batch_size,
                                             uint64_t epoch_seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (task.samples.empty()) {
    throw std::invalid_argument("task " + std::to_string(task.task_index) + " has no samples");
  }
  const int64_t n = static_cast<int64_t>(task.samples.size());
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  SplitMix64 rng(epoch_seed);
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = rng.uniform_int(0, i);
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  std::vector<std::vector<int64_t>> batches;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return batches;
}

void export_dataset(const std::string& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json header;
  header["version"] = 1;
  header["num_classes"] = ds.num_classes;
  header["image_size"] = ds.image_size;
  header["num_images"] = ds.samples.size();
  std::ofstream jf(dir + "/dataset.json");
  if (!jf) throw std::runtime_error("cannot write " + dir + "/dataset.json");
  jf << header.dump(2) << "\n";

  std::ofstream imf(dir + "/images.f64", std::ios::binary);
  if (!imf) throw std::runtime_error("cannot write " + dir + "/images.f64");
  for (const Sample& s : ds.samples) {
    imf.write(reinterpret_cast<const char*>(s.image.raw()),
              static_cast<std::streamsize>(s.image.numel() * sizeof(double)));
  }

  std::ofstream af(dir + "/annotations.txt");
  if (!af) throw std::runtime_error("cannot write " + dir + "/annotations.txt");
  char line[256];
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    for (const BoxAnnotation& b : ds.samples[i].boxes) {
      std::snprintf(line, sizeof(line), "%zu %lld %.17g %.17g %.17g %.17g\n", i,
                    static_cast<long long>(b.class_id), b.box[0], b.box[1], b.box[2], b.box[3]);
      af << line;
    }
  }
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream jf(dir + "/dataset.json");
  if (!jf) throw std::runtime_error("cannot open " + dir + "/dataset.json");
  nlohmann::json header;
  try {
    jf >> header;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad dataset header in " + dir + ": " + e.what());
  }
  Dataset ds;
  ds.num_classes = header.at("num_classes").get<int64_t>();
  ds.image_size = header.at("image_size").get<int64_t>();
  const int64_t num_images = header.at("num_images").get<int64_t>();
  if (ds.image_size != kCanvas) {
    throw std::runtime_error("unsupported image_size " + std::to_string(ds.image_size));
  }

  std::ifstream imf(dir + "/images.f64", std::ios::binary);
  if (!imf) throw std::runtime_error("cannot open " + dir + "/images.f64");
  const int64_t numel = 3 * kCanvas * kCanvas;
  for (int64_t i = 0; i < num_images; ++i) {
    std::vector<double> pix(static_cast<size_t>(numel));
    imf.read(reinterpret_cast<char*>(pix.data()),
             static_cast<std::streamsize>(numel * sizeof(double)));
    if (imf.gcount() != static_cast<std::streamsize>(numel * sizeof(double))) {
      throw std::runtime_error("images.f64 truncated at image " + std::to_string(i));
    }
    Sample s;
    s.image = ad::Tensor(ad::Shape{3, kCanvas, kCanvas}, std::move(pix));
    ds.samples.push_back(std::move(s));
  }

  std::ifstream af(dir + "/annotations.txt");
  if (!af) throw std::runtime_error("cannot open " + dir + "/annotations.txt");
  std::string line;
  int64_t line_no = 0;
  while (std::getline(af, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int64_t image_id = 0;
    BoxAnnotation b;
    if (!(ls >> image_id >> b.class_id >> b.box[0] >> b.box[1] >> b.box[2] >> b.box[3])) {
      throw std::runtime_error("bad annotation line " + std::to_string(line_no) + " in " + dir);
    }
    if (image_id < 0 || image_id >= num_images) {
      throw std::runtime_error("annotation line " + std::to_string(line_no) +
                               " references image " + std::to_string(image_id));
    }
    ds.samples[static_cast<size_t>(image_id)].boxes.push_back(b);
  }
  return ds;
}

}  // namespace cldet::data
