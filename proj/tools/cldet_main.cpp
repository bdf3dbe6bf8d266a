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
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cldet/data/scenario.hpp"
#include "cldet/det/checkpoint.hpp"
#include "cldet/det/detector.hpp"
#include "cldet/eval/ledger.hpp"
#include "cldet/eval/metrics.hpp"
#include "cldet/train/config.hpp"
#include "cldet/train/trainer.hpp"

namespace data = cldet::data;
namespace det = cldet::det;
namespace eval = cldet::eval;
namespace cl = cldet::cl;
namespace train = cldet::train;

namespace {

int cmd_gen_data(int64_t images, int64_t classes, uint64_t seed, const std::string& out) {
  data::Dataset ds = data::generate_dataset(images, classes, seed);
  std::filesystem::create_directories(out);
  data::export_dataset(out, ds);
  int64_t boxes = 0;
  for (const data::Sample& s : ds.samples) boxes += static_cast<int64_t>(s.boxes.size());
  std::printf("wrote %lld images (%lld boxes, %lld classes) to %s\n",
              static_cast<long long>(images), static_cast<long long>(boxes),
              static_cast<long long>(classes), out.c_str());
  return 0;
}

int cmd_run(const std::string& config_path, bool resume) {
  train::ExperimentConfig cfg = train::load_config(config_path);
  train::RunArtifacts art = train::run_experiment(cfg, resume);
  std::printf("%s\n", train::csv_header().c_str());
  for (const train::TaskRow& row : art.rows) {
    std::printf("%s\n", train::csv_row(row).c_str());
  }
  std::printf("artifacts in %s\n", cfg.output_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir) {
  nlohmann::json meta;
  det::Detector model = det::load_detector(checkpoint, &meta);
  data::Dataset ds = data::load_dataset(data_dir);

  cl::StrategyKind kind = cl::StrategyKind::kFinetune;
  if (meta.contains("strategy")) kind = cl::parse_strategy(meta["strategy"].get<std::string>());

  const cl::ClassRange all{1, model.spec.num_classes};
  eval::EvalReport report = eval::evaluate(model, ds.samples, cl::ClassRange{1, 0}, all);
  eval::CostLedger ledger = eval::cost_ledger(model.spec, model.frozen_boundary, kind);
  std::fputs(train::format_report(report, ledger).c_str(), stdout);
  return 0;
}

int cmd_ledger(const std::string& config_path, bool sweep) {
  train::ExperimentConfig cfg = train::load_config(config_path);
  const data::ScenarioSpec scenario = data::ScenarioSpec::parse(cfg.scenario);
  const det::DetectorSpec spec = det::DetectorSpec::toy(scenario.total_classes());
  const cl::StrategyState resolved =
      cl::make_strategy(cfg.strategy, scenario.counts[0], cfg.freeze);

  std::vector<std::string> boundaries =
      sweep ? spec.boundaries() : std::vector<std::string>{resolved.freeze_boundary};
  std::printf("strategy = %s\n", cl::strategy_name(cfg.strategy));
  std::printf("%-8s %10s %10s %10s %12s %12s %8s %8s\n", "freeze", "trainable", "total",
              "overhead", "fwd_macs", "bwd_macs", "fwd/cls", "all/cls");
  for (const std::string& b : boundaries) {
    const eval::CostLedger led = eval::cost_ledger(spec, b, cfg.strategy);
    const eval::CostLedger classic = eval::cost_ledger(spec, b, cl::StrategyKind::kSid);
    const double fwd_ratio = static_cast<double>(led.forward_macs_update) /
                             static_cast<double>(classic.forward_macs_update);
    const double all_ratio =
        static_cast<double>(led.forward_macs_update + led.backward_macs_update) /
        static_cast<double>(classic.forward_macs_update + classic.backward_macs_update);
    std::printf("%-8s %10lld %10lld %10lld %12lld %12lld %8.4f %8.4f\n", b.c_str(),
                static_cast<long long>(led.trainable_params),
                static_cast<long long>(led.total_params),
                static_cast<long long>(led.cl_overhead_params),
                static_cast<long long>(led.forward_macs_update),
                static_cast<long long>(led.backward_macs_update), fwd_ratio, all_ratio);
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& plot_dir) {
  std::printf("%-24s %5s %-14s %9s %9s %9s\n", "run", "task", "strategy", "old_map",
              "new_map", "all_map");
  for (const std::string& dir : runs) {
    const std::vector<train::TaskRow> rows = train::read_csv(dir + "/results.csv");
    const std::string name = std::filesystem::path(dir).filename().string();
    for (const train::TaskRow& r : rows) {
      auto fmt = [](const std::optional<double>& v) {
        char buf[32];
        if (!v) return std::string("-");
        std::snprintf(buf, sizeof(buf), "%.4f", *v);
        return std::string(buf);
      };
      std::printf("%-24s %5lld %-14s %9s %9s %9.4f\n", name.c_str(),
                  static_cast<long long>(r.task), r.strategy.c_str(),
                  fmt(r.old_map).c_str(), fmt(r.new_map).c_str(), r.all_map);
    }
    if (!plot_dir.empty()) {
      std::filesystem::create_directories(plot_dir);
      std::ofstream out(plot_dir + "/" + name + "_allmap.txt", std::ios::binary);
      for (const train::TaskRow& r : rows) {
        out << r.task << " " << r.all_map << "\n";
      }
    }
  }
  if (!plot_dir.empty()) std::printf("plot series written to %s\n", plot_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual-learning workbench for a toy one-stage detector"};
  app.require_subcommand(1);

  int64_t images = 1000, classes = 8;
  uint64_t seed = 1;
  std::string out_dir, config_path, checkpoint, data_dir, plot_dir;
  bool resume = false, sweep = false;
  std::vector<std::string> runs;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--images", images, "number of images")->required();
  gen->add_option("--classes", classes, "number of shape classes (1-8)")->required();
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* run = app.add_subcommand("run", "run a full experiment from a config file");
  run->add_option("--config", config_path, "config file")->required();
  run->add_flag("--resume", resume, "continue from existing checkpoints");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on an exported dataset");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--data", data_dir, "dataset directory")->required();

  CLI::App* led = app.add_subcommand("ledger", "cost accounting without training");
  led->add_option("--config", config_path, "config file")->required();
  led->add_flag("--sweep-freeze", sweep, "one row per freeze boundary");

  CLI::App* rep = app.add_subcommand("report", "merge run CSVs into a comparison table");
  rep->add_option("--runs", runs, "run directories")->required()->expected(-1);
  rep->add_option("--plot-out", plot_dir, "write per-run mAP series here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(images, classes, seed, out_dir);
    if (run->parsed()) return cmd_run(config_path, resume);
    if (ev->parsed()) return cmd_eval(checkpoint, data_dir);
    if (led->parsed()) return cmd_ledger(config_path, sweep);
    if (rep->parsed()) return cmd_report(runs, plot_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
