// Copyright 2026 the pssdet authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "core/ablate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "core/eval.hpp"
#include "core/rng.hpp"
#include "core/workflows.hpp"

namespace pssdet {
namespace {

using json = nlohmann::json;

AblationCell variant(const RunConfig& base, std::string label) {
  return AblationCell{std::move(label), base};
}

// Everything that shapes the detector-only first phase of a two-step run.
// Selector head settings are excluded on purpose: phase 1 never builds the
// selector losses and parameter initialization streams are per-name, so the
// shared parameters come out bitwise identical across selector variants.
std::string phase1_key(const RunConfig& cfg) {
  json sig;
  sig["seed"] = cfg.seed;
  sig["data"] = {{"height", cfg.data.height},         {"width", cfg.data.width},
                 {"min_objects", cfg.data.min_objects}, {"max_objects", cfg.data.max_objects},
                 {"overlap_cap", cfg.data.overlap_cap}, {"noise", cfg.data.noise}};
  sig["train_count"] = cfg.train_count;
  sig["train_data_dir"] = cfg.train_data_dir;
  sig["detector"] = {{"num_classes", cfg.detector.num_classes},
                     {"strides", cfg.detector.strides},
                     {"tower_depth", cfg.detector.tower_depth},
                     {"tower_channels", cfg.detector.tower_channels},
                     {"use_centerness", cfg.detector.use_centerness}};
  sig["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"lr", cfg.train.lr},
                  {"lr_decay_epochs", cfg.train.lr_decay_epochs},
                  {"lr_decay_factor", cfg.train.lr_decay_factor},
                  {"warmup_steps", cfg.train.warmup_steps},
                  {"momentum", cfg.train.momentum},
                  {"weight_decay", cfg.train.weight_decay},
                  {"assigner", cfg.train.assigner == AssignerKind::kFcos ? "fcos" : "atss"},
                  {"use_hflip", cfg.train.use_hflip},
                  {"phase1_epochs", cfg.train.phase1_epochs}};
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_str(sig.dump())));
  return buf;
}

// Runs jobs[i]() for every index on up to `cap` threads; the first exception
// wins and is rethrown after all threads join.
void run_pool(const std::vector<std::function<void()>>& jobs, int cap) {
  if (jobs.empty()) return;
  const int threads = std::max(1, std::min<int>(cap, static_cast<int>(jobs.size())));
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs.size());
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        jobs[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string format_row(const std::string& label, const EvalReport& raw, const EvalReport& nms) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-18s %12.4f %11.4f %11.4f %10.4f %9.4f", label.c_str(), raw.ap50, raw.mean_ap,
                raw.duplicate_rate, nms.ap50, nms.mean_ap);
  return buf;
}

}  // namespace

const std::vector<std::string>& ablation_sweeps() {
  static const std::vector<std::string> kNames = {"stopgrad", "pss-branch", "pss-depth", "lambda1",
                                                  "match",    "centerness", "ranking",   "mode"};
  return kNames;
}

std::vector<AblationCell> ablation_cells(const RunConfig& base, const std::string& sweep) {
  std::vector<AblationCell> cells;
  if (sweep == "stopgrad") {
    cells.push_back(variant(base, "with"));
    cells.back().cfg.detector.use_stop_grad = true;
    cells.push_back(variant(base, "without"));
    cells.back().cfg.detector.use_stop_grad = false;
  } else if (sweep == "pss-branch") {
    cells.push_back(variant(base, "regression"));
    cells.back().cfg.detector.pss_branch = PssBranch::kRegression;
    cells.push_back(variant(base, "classification"));
    cells.back().cfg.detector.pss_branch = PssBranch::kClassification;
  } else if (sweep == "pss-depth") {
    for (int depth : {1, 2, 3}) {
      cells.push_back(variant(base, "depth-" + std::to_string(depth)));
      cells.back().cfg.detector.pss_depth = depth;
    }
  } else if (sweep == "lambda1") {
    for (double w : {0.5, 1.0, 2.0}) {
      char label[32];
      std::snprintf(label, sizeof(label), "lambda1-%g", w);
      cells.push_back(variant(base, label));
      cells.back().cfg.train.lambda1 = w;
    }
  } else if (sweep == "match") {
    for (QualityMode q : {QualityMode::kMul, QualityMode::kAdd}) {
      for (double a : {0.2, 0.4, 0.6, 0.8}) {
        char label[32];
        std::snprintf(label, sizeof(label), "%s-%g", q == QualityMode::kMul ? "mul" : "add", a);
        cells.push_back(variant(base, label));
        cells.back().cfg.train.quality = q;
        cells.back().cfg.train.alpha = a;
      }
    }
  } else if (sweep == "centerness") {
    cells.push_back(variant(base, "with"));
    cells.back().cfg.detector.use_centerness = true;
    cells.push_back(variant(base, "without"));
    cells.back().cfg.detector.use_centerness = false;
  } else if (sweep == "ranking") {
    cells.push_back(variant(base, "with"));
    if (cells.back().cfg.train.lambda2 <= 0) cells.back().cfg.train.lambda2 = 0.25;
    cells.push_back(variant(base, "without"));
    cells.back().cfg.train.lambda2 = 0;
  } else if (sweep == "mode") {
    cells.push_back(variant(base, "end-to-end"));
    cells.back().cfg.train.mode = TrainMode::kEndToEnd;
    cells.push_back(variant(base, "two-step"));
    cells.back().cfg.train.mode = TrainMode::kTwoStep;
  } else {
    std::ostringstream msg;
    msg << "unknown ablation sweep: " << sweep << " (expected one of";
    for (const std::string& name : ablation_sweeps()) msg << " " << name;
    msg << ")";
    throw std::invalid_argument(msg.str());
  }
  return cells;
}

std::string workflow_ablate(const RunConfig& base, const std::string& sweep, const std::string& out_dir,
                            int max_parallel) {
  std::vector<AblationCell> cells = ablation_cells(base, sweep);
  for (const AblationCell& cell : cells) validate_run_config(cell.cfg);
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream resolved(out_dir + "/resolved_config.json");
    resolved << run_config_to_json(base);
  }

  // Stage 1: one detector-only phase per distinct first-phase signature.
  std::map<std::string, RunConfig> phase1_cfgs;
  std::map<std::string, std::string> phase1_ckpts;
  for (const AblationCell& cell : cells) {
    if (cell.cfg.train.mode != TrainMode::kTwoStep) continue;
    phase1_cfgs.emplace(phase1_key(cell.cfg), cell.cfg);
  }
  std::vector<std::function<void()>> phase1_jobs;
  for (const auto& [key, cfg] : phase1_cfgs) {
    const std::string dir = out_dir + "/phase1-" + key;
    phase1_ckpts[key] = dir + "/phase1.pssd";
    phase1_jobs.push_back([cfg = cfg, dir] { workflow_train_phase1(cfg, dir); });
  }
  run_pool(phase1_jobs, max_parallel);

  // Stage 2: the cells themselves, two-step ones resuming from stage 1.
  std::vector<TrainArtifacts> results(cells.size());
  std::vector<std::string> provenance(cells.size());
  std::vector<std::function<void()>> cell_jobs;
  for (size_t i = 0; i < cells.size(); ++i) {
    const AblationCell& cell = cells[i];
    const std::string dir = out_dir + "/" + cell.label;
    std::function<void()> body;
    if (cell.cfg.train.mode == TrainMode::kTwoStep) {
      const std::string key = phase1_key(cell.cfg);
      provenance[i] = "phase1-" + key;
      body = [&results, i, cfg = cell.cfg, ckpt = phase1_ckpts.at(key), dir] {
        results[i] = workflow_train_phase2(cfg, ckpt, dir);
      };
    } else {
      body = [&results, i, cfg = cell.cfg, dir] { results[i] = workflow_train(cfg, dir); };
    }
    cell_jobs.push_back([body = std::move(body), label = cell.label] {
      try {
        body();
      } catch (const std::exception& e) {
        throw std::runtime_error("ablation cell " + label + ": " + e.what());
      }
    });
  }
  run_pool(cell_jobs, max_parallel);

  // Comparison table plus machine-readable reports.
  std::ostringstream table;
  table << "sweep: " << sweep << "\n";
  {
    char head[160];
    std::snprintf(head, sizeof(head), "%-18s %12s %11s %11s %10s %9s", "variant", "ap50(raw)", "map(raw)",
                  "dup(raw)", "ap50(nms)", "map(nms)");
    table << head << "\n";
  }
  json doc;
  doc["sweep"] = sweep;
  doc["cells"] = json::array();
  for (size_t i = 0; i < cells.size(); ++i) {
    table << format_row(cells[i].label, results[i].end_to_end, results[i].one_to_many_nms) << "\n";
    json cell;
    cell["label"] = cells[i].label;
    cell["dir"] = out_dir + "/" + cells[i].label;
    cell["phase1"] = provenance[i].empty() ? json() : json(provenance[i]);
    cell["end_to_end"] = json::parse(report_to_json(results[i].end_to_end));
    cell["one_to_many_nms"] = json::parse(report_to_json(results[i].one_to_many_nms));
    doc["cells"].push_back(std::move(cell));
  }
  table << "raw = selector score path without suppression, nms = one-to-many decode + NMS\n";
  table << "base: seed " << base.seed << ", " << base.train_count << " train / " << base.val_count
        << " val scenes, " << base.train.epochs << " epochs\n";
  for (const auto& [key, ckpt] : phase1_ckpts) {
    std::ostringstream users;
    for (size_t i = 0; i < cells.size(); ++i) {
      if (provenance[i] == "phase1-" + key) users << (users.tellp() > 0 ? ", " : "") << cells[i].label;
    }
    table << "shared first phase phase1-" << key << " -> " << users.str() << "\n";
  }

  const std::string text = table.str();
  std::ofstream txt(out_dir + "/ablation_" + sweep + ".txt");
  txt << text;
  std::ofstream js(out_dir + "/ablation_" + sweep + ".json");
  js << doc.dump(2) << "\n";
  return text;
}

}  // namespace pssdet
