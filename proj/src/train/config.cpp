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
#include "cldet/train/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cldet/data/scenario.hpp"

namespace cldet::train {
namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw std::invalid_argument("config line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& v, int line) {
  size_t used = 0;
  int64_t out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    fail(line, "expected an integer, got '" + v + "'");
  }
  if (used != v.size()) fail(line, "trailing characters after integer '" + v + "'");
  return out;
}

double parse_real(const std::string& v, int line) {
  size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    fail(line, "expected a number, got '" + v + "'");
  }
  if (used != v.size()) fail(line, "trailing characters after number '" + v + "'");
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  const data::ScenarioSpec sc = data::ScenarioSpec::parse(scenario);
  if (strategy == cl::StrategyKind::kJoint && sc.num_tasks() != 1) {
    throw std::invalid_argument(
        "joint training needs a single-task scenario; got '" + scenario + "'");
  }
  if (images <= 0 || eval_images <= 0) {
    throw std::invalid_argument("config: images and eval_images must be positive");
  }
  if (output_dir.empty()) throw std::invalid_argument("config: output directory is empty");
  hp.validate();
}

std::string ExperimentConfig::digest() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "scenario=%s strategy=%s freeze=%s seed=%llu images=%lld data_seed=%llu "
                "eval_images=%lld lr=%.17g wd=%.17g b1=%.17g b2=%.17g eps=%.17g "
                "warmup=%lld epochs=%lld t_max=%lld batch=%lld",
                scenario.c_str(), cl::strategy_name(strategy), freeze.c_str(),
                static_cast<unsigned long long>(train_seed),
                static_cast<long long>(images),
                static_cast<unsigned long long>(data_seed),
                static_cast<long long>(eval_images), hp.base_lr, hp.weight_decay, hp.beta1,
                hp.beta2, hp.eps, static_cast<long long>(hp.warmup_steps),
                static_cast<long long>(hp.epochs_per_task), static_cast<long long>(hp.t_max),
                static_cast<long long>(hp.batch_size));
  return buf;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  bool t_max_set = false;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    if (size_t pos = s.find_first_of("#;"); pos != std::string::npos) s.resize(pos);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section != "experiment" && section != "data" && section != "train") {
        fail(line, "unknown section '" + section + "'");
      }
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) fail(line, "empty key");
    if (value.empty()) fail(line, "empty value for '" + key + "'");
    if (section.empty()) fail(line, "key '" + key + "' outside any section");

    if (section == "experiment") {
      if (key == "scenario") {
        cfg.scenario = value;
      } else if (key == "strategy") {
        try {
          cfg.strategy = cl::parse_strategy(value);
        } catch (const std::exception& e) {
          fail(line, e.what());
        }
      } else if (key == "freeze") {
        cfg.freeze = value == "default" ? "" : value;
      } else if (key == "output") {
        cfg.output_dir = value;
      } else if (key == "seed") {
        cfg.train_seed = static_cast<uint64_t>(parse_int(value, line));
      } else {
        fail(line, "unknown key '" + key + "' in [experiment]");
      }
    } else if (section == "data") {
      if (key == "images") {
        cfg.images = parse_int(value, line);
      } else if (key == "seed") {
        cfg.data_seed = static_cast<uint64_t>(parse_int(value, line));
      } else if (key == "eval_images") {
        cfg.eval_images = parse_int(value, line);
      } else {
        fail(line, "unknown key '" + key + "' in [data]");
      }
    } else {
      if (key == "base_lr") {
        cfg.hp.base_lr = parse_real(value, line);
      } else if (key == "weight_decay") {
        cfg.hp.weight_decay = parse_real(value, line);
      } else if (key == "beta1") {
        cfg.hp.beta1 = parse_real(value, line);
      } else if (key == "beta2") {
        cfg.hp.beta2 = parse_real(value, line);
      } else if (key == "eps") {
        cfg.hp.eps = parse_real(value, line);
      } else if (key == "warmup") {
        cfg.hp.warmup_steps = parse_int(value, line);
      } else if (key == "epochs") {
        cfg.hp.epochs_per_task = parse_int(value, line);
        if (!t_max_set) cfg.hp.t_max = cfg.hp.epochs_per_task;
      } else if (key == "t_max") {
        cfg.hp.t_max = parse_int(value, line);
        t_max_set = true;
      } else if (key == "batch") {
        cfg.hp.batch_size = parse_int(value, line);
      } else {
        fail(line, "unknown key '" + key + "' in [train]");
      }
    }
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace cldet::train
