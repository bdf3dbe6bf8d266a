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
#include "cldet/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cldet/det/checkpoint.hpp"
#include "cldet/rng.hpp"

namespace fs = std::filesystem;

namespace cldet::train {
namespace {

constexpr uint64_t kBatchOrderStream = 0x17E5;
constexpr uint64_t kComposeStream = 0xC055;
constexpr uint64_t kBuildStream = 0xB11D;
constexpr uint64_t kEvalDataStream = 0xE7A1;
constexpr uint64_t kTransitionStream = 0xF1A0;
constexpr uint64_t kTaskTrainStream = 0x77A0;

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void dump_model(const std::string& path, const det::Detector& model, int64_t epoch,
                int64_t step) {
  if (path.empty()) return;
  nlohmann::json meta;
  meta["aborted_at_epoch"] = epoch;
  meta["aborted_at_step"] = step;
  det::save_detector(path, model, meta);
}

// Held-out samples with annotations restricted to classes the model has seen.
std::vector<data::Sample> visible_subset(const data::Dataset& ds, int64_t max_class) {
  std::vector<data::Sample> out;
  out.reserve(ds.samples.size());
  for (const data::Sample& s : ds.samples) {
    data::Sample clipped;
    clipped.image = s.image;
    for (const data::BoxAnnotation& b : s.boxes) {
      if (b.class_id <= max_class) clipped.boxes.push_back(b);
    }
    out.push_back(std::move(clipped));
  }
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

TrainTaskResult train_task(const det::Detector& model, const cl::StrategyState& state,
                           const data::TaskDataset& task, const Hyperparams& hp,
                           uint64_t seed, const std::string& abort_dump_path) {
  hp.validate();
  TrainTaskResult result{model, {}};
  if (hp.epochs_per_task == 0) return result;
  if (task.samples.empty()) throw std::invalid_argument("train_task: task has no samples");

  AdamWState opt = make_optimizer_state(result.model);
  int64_t global_step = 0;
  for (int64_t epoch = 0; epoch < hp.epochs_per_task; ++epoch) {
    const uint64_t epoch_seed = derive_seed(seed, static_cast<uint64_t>(epoch));
    const std::vector<std::vector<int64_t>> batches =
        data::batch_iter(task, hp.batch_size, derive_seed(epoch_seed, kBatchOrderStream));
    SplitMix64 mix_rng(derive_seed(epoch_seed, kComposeStream));

    EpochStats stats{epoch, 0.0, 0.0, 0.0};
    for (const std::vector<int64_t>& batch_ids : batches) {
      std::vector<cl::TrainExample> batch;
      batch.reserve(batch_ids.size());
      const cl::ClassRange range = cl::supervised_range(state);
      for (int64_t idx : batch_ids) {
        batch.push_back(cl::make_example(task.samples[static_cast<size_t>(idx)], range));
      }
      batch = cl::compose_batch(state, batch, mix_rng);

      ad::Tape tape;
      std::map<std::string, ad::Tensor> bound = det::bind_params(result.model, tape);
      cl::LossBreakdown lb = cl::strategy_loss(state, result.model, batch, tape, &bound);

      const double total = lb.total.value();
      if (!std::isfinite(total)) {
        dump_model(abort_dump_path, result.model, epoch, global_step);
        throw std::runtime_error(
            "train_task: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
            std::to_string(global_step) +
            (abort_dump_path.empty() ? "" : "; model dumped to " + abort_dump_path));
      }
      stats.mean_total += total;
      stats.mean_model += lb.model_loss.value();
      stats.mean_distill +=
          state.alpha * (lb.distill_loss.value() + lb.intermediate_loss.value());

      ad::GradMap grads = tape.backward(lb.total);
      const double lr = lr_at(global_step, epoch, hp);
      try {
        adamw_step(result.model, bound, grads, opt, lr, hp);
      } catch (const std::exception&) {
        dump_model(abort_dump_path, result.model, epoch, global_step);
        throw;
      }
      ++global_step;
    }
    const double n = static_cast<double>(batches.size());
    stats.mean_total /= n;
    stats.mean_model /= n;
    stats.mean_distill /= n;
    result.curve.push_back(stats);
  }
  return result;
}

std::string csv_header() {
  return "task,strategy,old_map,new_map,all_map,trainable_params,total_params,"
         "overhead_params,fwd_macs,bwd_macs,buffer_bytes";
}

std::string csv_row(const TaskRow& row) {
  std::string s = std::to_string(row.task) + "," + row.strategy + ",";
  if (row.old_map) s += fmt6(*row.old_map);
  s += ",";
  if (row.new_map) s += fmt6(*row.new_map);
  s += "," + fmt6(row.all_map);
  s += "," + std::to_string(row.ledger.trainable_params);
  s += "," + std::to_string(row.ledger.total_params);
  s += "," + std::to_string(row.ledger.cl_overhead_params);
  s += "," + std::to_string(row.ledger.forward_macs_update);
  s += "," + std::to_string(row.ledger.backward_macs_update);
  s += "," + std::to_string(row.ledger.buffer_bytes);
  return s;
}

std::vector<TaskRow> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open CSV '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) {
    throw std::runtime_error("CSV '" + path + "' has an unexpected header");
  }
  std::vector<TaskRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 11) {
      throw std::runtime_error("CSV '" + path + "': malformed row '" + line + "'");
    }
    TaskRow row;
    row.task = std::stoll(f[0]);
    row.strategy = f[1];
    if (!f[2].empty()) row.old_map = std::stod(f[2]);
    if (!f[3].empty()) row.new_map = std::stod(f[3]);
    row.all_map = std::stod(f[4]);
    row.ledger.trainable_params = std::stoll(f[5]);
    row.ledger.total_params = std::stoll(f[6]);
    row.ledger.cl_overhead_params = std::stoll(f[7]);
    row.ledger.forward_macs_update = std::stoll(f[8]);
    row.ledger.backward_macs_update = std::stoll(f[9]);
    row.ledger.buffer_bytes = std::stoll(f[10]);
    rows.push_back(row);
  }
  return rows;
}

std::string format_report(const eval::EvalReport& report, const eval::CostLedger& ledger) {
  std::ostringstream out;
  if (report.old_map) out << "old_map = " << fmt6(*report.old_map) << "\n";
  if (report.new_map) out << "new_map = " << fmt6(*report.new_map) << "\n";
  out << "all_map = " << fmt6(report.all_map) << "\n";
  for (const auto& [cls, ap] : report.per_class_ap) {
    out << "class_" << cls << "_ap = " << fmt6(ap) << "\n";
  }
  out << "trainable_params = " << ledger.trainable_params << "\n";
  out << "total_params = " << ledger.total_params << "\n";
  out << "overhead_params = " << ledger.cl_overhead_params << "\n";
  out << "fwd_macs = " << ledger.forward_macs_update << "\n";
  out << "bwd_macs = " << ledger.backward_macs_update << "\n";
  out << "buffer_bytes = " << ledger.buffer_bytes << "\n";
  return out.str();
}

std::string checkpoint_path(const ExperimentConfig& cfg, int64_t task) {
  return cfg.output_dir + "/task" + std::to_string(task) + ".ckpt";
}
std::string curve_path(const ExperimentConfig& cfg, int64_t task) {
  return cfg.output_dir + "/task" + std::to_string(task) + "_curve.txt";
}
std::string report_path(const ExperimentConfig& cfg, int64_t task) {
  return cfg.output_dir + "/task" + std::to_string(task) + "_report.txt";
}
std::string csv_path(const ExperimentConfig& cfg) { return cfg.output_dir + "/results.csv"; }

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

void write_curve(const std::string& path, const std::vector<EpochStats>& curve) {
  std::ostringstream out;
  char buf[160];
  for (const EpochStats& e : curve) {
    std::snprintf(buf, sizeof(buf), "%lld %.17g %.17g %.17g\n",
                  static_cast<long long>(e.epoch), e.mean_total, e.mean_model,
                  e.mean_distill);
    out << buf;
  }
  write_text(path, out.str());
}

void write_csv_file(const std::string& path, const std::vector<TaskRow>& rows) {
  std::ostringstream out;
  out << csv_header() << "\n";
  for (const TaskRow& row : rows) out << csv_row(row) << "\n";
  write_text(path, out.str());
}

// Number of leading tasks restorable from checkpoints written by this config.
int64_t resumable_tasks(const ExperimentConfig& cfg, int64_t num_tasks) {
  int64_t done = 0;
  for (int64_t t = 0; t < num_tasks; ++t) {
    const std::string path = checkpoint_path(cfg, t);
    if (!fs::exists(path)) break;
    nlohmann::json meta;
    det::load_detector(path, &meta);
    if (meta.value("config", "") != cfg.digest() ||
        meta.value("task_index", static_cast<int64_t>(-1)) != t) {
      throw std::runtime_error("checkpoint '" + path +
                               "' was produced by a different configuration");
    }
    ++done;
  }
  return done;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg, bool resume) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);

  const data::ScenarioSpec scenario = data::ScenarioSpec::parse(cfg.scenario);
  const int64_t num_tasks = scenario.num_tasks();
  const data::Dataset dataset =
      data::generate_dataset(cfg.images, scenario.total_classes(), cfg.data_seed);
  const data::TaskSequence tasks = data::split_tasks(dataset, scenario);
  const data::Dataset eval_set = data::generate_dataset(
      cfg.eval_images, scenario.total_classes(), derive_seed(cfg.data_seed, kEvalDataStream));

  det::Detector model = det::build_detector(det::DetectorSpec::toy(scenario.counts[0]),
                                            derive_seed(cfg.train_seed, kBuildStream));
  cl::StrategyState state = cl::make_strategy(cfg.strategy, scenario.counts[0], cfg.freeze);

  const int64_t completed = resume ? resumable_tasks(cfg, num_tasks) : 0;

  RunArtifacts art;
  art.csv = csv_path(cfg);
  for (int64_t t = 0; t < num_tasks; ++t) {
    if (t > 0) {
      cl::TaskTransition next = cl::finalize_task(
          state, model, tasks[static_cast<size_t>(t - 1)], scenario.counts[t],
          derive_seed(cfg.train_seed, kTransitionStream + static_cast<uint64_t>(t)));
      model = std::move(next.model);
      state = std::move(next.state);
    }

    if (t < completed) {
      model = det::load_detector(checkpoint_path(cfg, t));
    } else {
      TrainTaskResult trained = train_task(
          model, state, tasks[static_cast<size_t>(t)], cfg.hp,
          derive_seed(cfg.train_seed, kTaskTrainStream + static_cast<uint64_t>(t)),
          cfg.output_dir + "/abort.ckpt");
      model = std::move(trained.model);
      write_curve(curve_path(cfg, t), trained.curve);

      nlohmann::json meta;
      meta["task_index"] = t;
      meta["strategy"] = cl::strategy_name(state.kind);
      meta["config"] = cfg.digest();
      det::save_detector(checkpoint_path(cfg, t), model, meta);
    }

    const std::vector<data::Sample> eval_samples =
        visible_subset(eval_set, state.new_range.last);
    const eval::EvalReport report =
        eval::evaluate(model, eval_samples, state.old_range, state.new_range);
    // Task 0 has no teacher and an empty buffer, so its updates cost the same
    // as plain training regardless of strategy.
    const cl::StrategyKind cost_kind = t == 0 ? cl::StrategyKind::kFinetune : state.kind;
    const eval::CostLedger ledger =
        eval::cost_ledger(model.spec, model.frozen_boundary, cost_kind, &state.buffer);
    write_text(report_path(cfg, t), format_report(report, ledger));

    TaskRow row;
    row.task = t;
    row.strategy = cl::strategy_name(state.kind);
    row.old_map = report.old_map;
    row.new_map = report.new_map;
    row.all_map = report.all_map;
    row.ledger = ledger;
    art.rows.push_back(row);
    write_csv_file(art.csv, art.rows);
  }
  return art;
}

}  // namespace cldet::train
