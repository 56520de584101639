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

#include "core/workflows.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "nlohmann/json.hpp"

#include "core/checkpoint.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"
#include "core/trainer.hpp"

namespace pssdet {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(Clock::now() - t0).count();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
  write_text((fs::path(out_dir) / "resolved_config.json").string(), run_config_to_json(cfg));
}

std::vector<Scene> synth_scenes(uint64_t seed, int count, const DataConfig& data) {
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) scenes.push_back(make_scene(seed, i, data));
  return scenes;
}

std::vector<Detection> decode_path(const OutputSnapshot& snap, int img_w, int img_h, EvalPath path,
                                   const InferenceConfig& icfg, double nms_iou) {
  switch (path) {
    case EvalPath::kEndToEnd:
      return decode_end_to_end(snap, img_w, img_h, icfg);
    case EvalPath::kOneToManyNms:
      return decode_one_to_many(snap, img_w, img_h, icfg, true, nms_iou);
    case EvalPath::kOneToManyRaw:
      return decode_one_to_many(snap, img_w, img_h, icfg, false);
  }
  throw std::invalid_argument("unknown eval path");
}

const char* path_tag(EvalPath path) {
  switch (path) {
    case EvalPath::kEndToEnd:
      return "end_to_end";
    case EvalPath::kOneToManyNms:
      return "one_to_many_nms";
    case EvalPath::kOneToManyRaw:
      return "one_to_many_raw";
  }
  return "unknown";
}

Detector load_model(const std::string& checkpoint) {
  if (!fs::exists(checkpoint)) throw std::runtime_error("checkpoint not found: " + checkpoint);
  return Detector::load(checkpoint);
}

// Validation record appended after each snapshot epoch.
void append_snapshot(std::ofstream& out, int epoch, const EvalReport& report) {
  json line;
  line["epoch"] = epoch;
  line["end_to_end"] = json::parse(report_to_json(report));
  out << line.dump() << "\n";
  out.flush();
}

TrainArtifacts finish_run(const RunConfig& cfg, Detector& model, const std::vector<Scene>& val,
                          const std::string& out_dir, const std::string& checkpoint_name) {
  TrainArtifacts art;
  art.checkpoint_path = (fs::path(out_dir) / checkpoint_name).string();
  art.log_path = (fs::path(out_dir) / "train_log.csv").string();
  art.snapshots_path = (fs::path(out_dir) / "eval_snapshots.jsonl").string();
  model.save(art.checkpoint_path);
  art.end_to_end = run_eval(model, val, EvalPath::kEndToEnd, cfg.infer, cfg.nms_iou);
  art.one_to_many_nms = run_eval(model, val, EvalPath::kOneToManyNms, cfg.infer, cfg.nms_iou);
  write_text((fs::path(out_dir) / "eval_end_to_end.json").string(), report_to_json(art.end_to_end) + "\n");
  write_text((fs::path(out_dir) / "eval_one_to_many_nms.json").string(),
             report_to_json(art.one_to_many_nms) + "\n");
  return art;
}

enum class RunKind { kFull, kPhase1, kPhase2 };

TrainArtifacts train_run(const RunConfig& cfg, const std::string& out_dir, RunKind kind,
                         const std::string& phase1_checkpoint) {
  validate_run_config(cfg);
  fs::create_directories(out_dir);
  write_resolved_config(cfg, out_dir);

  const std::vector<Scene> train = training_scenes(cfg);
  const std::vector<Scene> val = validation_scenes(cfg);

  Detector model(cfg.detector, cfg.seed);
  if (kind == RunKind::kPhase2) {
    // Adopt the donor's detector parameters; the selector head keeps its
    // fresh seed init, which is exactly the state phase 1 left it in.
    const Checkpoint ckpt = load_checkpoint(phase1_checkpoint);
    for (Param& p : model.params()) {
      if (Detector::is_pss_param(p.name)) continue;
      bool found = false;
      for (const auto& [name, value] : ckpt.params) {
        if (name != p.name) continue;
        if (value.shape() != p.value.shape()) {
          throw std::runtime_error("phase-1 checkpoint parameter " + name + " has a different shape");
        }
        p.value = value;
        found = true;
        break;
      }
      if (!found) throw std::runtime_error("phase-1 checkpoint is missing parameter " + p.name);
    }
  }

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  std::ofstream log((fs::path(out_dir) / "train_log.csv").string(), std::ios::binary);
  std::ofstream snapshots((fs::path(out_dir) / "eval_snapshots.jsonl").string(), std::ios::binary);
  const EpochHook hook = [&](int epoch, const Detector& m) {
    append_snapshot(snapshots, epoch, run_eval(m, val, EvalPath::kEndToEnd, cfg.infer, cfg.nms_iou));
  };

  std::string checkpoint_name = "checkpoint.pssd";
  switch (kind) {
    case RunKind::kFull:
      if (tc.mode == TrainMode::kTwoStep) {
        train_two_step(model, train, tc, &log, hook);
      } else {
        train_end_to_end(model, train, tc, &log, hook);
      }
      break;
    case RunKind::kPhase1:
      train_two_step_phase1(model, train, tc, &log, hook);
      checkpoint_name = "phase1.pssd";
      break;
    case RunKind::kPhase2:
      train_two_step_phase2(model, train, tc, &log, hook);
      break;
  }
  return finish_run(cfg, model, val, out_dir, checkpoint_name);
}

}  // namespace

std::vector<Scene> load_scenes(const std::string& dir) {
  const DatasetIndex index = load_annotations((fs::path(dir) / "annotations.json").string());
  std::vector<Scene> scenes;
  scenes.reserve(index.records.size());
  for (const ImageRecord& rec : index.records) {
    Scene scene;
    scene.image = read_ppm((fs::path(dir) / rec.file).string());
    scene.objects = rec.objects;
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::vector<Scene> training_scenes(const RunConfig& cfg) {
  if (!cfg.train_data_dir.empty()) return load_scenes(cfg.train_data_dir);
  return synth_scenes(derived_seed(cfg.seed, "data.train"), cfg.train_count, cfg.data);
}

std::vector<Scene> validation_scenes(const RunConfig& cfg) {
  if (!cfg.val_data_dir.empty()) return load_scenes(cfg.val_data_dir);
  return synth_scenes(derived_seed(cfg.seed, "data.val"), cfg.val_count, cfg.data);
}

GenDataSummary workflow_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  validate_config(cfg.data);
  if (cfg.train_count < 1 || cfg.val_count < 1) {
    throw std::invalid_argument("run config: dataset counts must be at least 1");
  }
  fs::create_directories(out_dir);
  write_resolved_config(cfg, out_dir);
  GenDataSummary summary;
  summary.train_dir = (fs::path(out_dir) / "train").string();
  summary.val_dir = (fs::path(out_dir) / "val").string();
  summary.train_images =
      static_cast<int>(generate_dataset(derived_seed(cfg.seed, "data.train"), cfg.train_count, cfg.data,
                                        summary.train_dir)
                           .records.size());
  summary.val_images = static_cast<int>(
      generate_dataset(derived_seed(cfg.seed, "data.val"), cfg.val_count, cfg.data, summary.val_dir).records.size());
  return summary;
}

EvalReport run_eval(const Detector& model, const std::vector<Scene>& scenes, EvalPath path,
                    const InferenceConfig& icfg, double nms_iou, std::vector<std::vector<Detection>>* dets_out) {
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GtInstance>> gts;
  dets.reserve(scenes.size());
  gts.reserve(scenes.size());
  double forward_ms = 0, post_ms = 0;

  for (const Scene& scene : scenes) {
    const int img_h = scene.image.dim(1), img_w = scene.image.dim(2);
    const auto t0 = Clock::now();
    Tape tape;
    const FlatOutputs out = model.forward(tape, scene.image);
    const OutputSnapshot snap = model.snapshot(tape, out);
    forward_ms += ms_since(t0);
    const auto t1 = Clock::now();
    dets.push_back(decode_path(snap, img_w, img_h, path, icfg, nms_iou));
    post_ms += ms_since(t1);
    gts.push_back(scene.objects);
  }

  EvalReport report = evaluate(dets, gts, model.config().num_classes);
  const double n = scenes.empty() ? 1.0 : static_cast<double>(scenes.size());
  report.forward_ms = forward_ms / n;  // mean per image
  report.post_ms = post_ms / n;
  if (dets_out) *dets_out = std::move(dets);
  return report;
}

TrainArtifacts workflow_train(const RunConfig& cfg, const std::string& out_dir) {
  return train_run(cfg, out_dir, RunKind::kFull, "");
}

TrainArtifacts workflow_train_phase1(const RunConfig& cfg, const std::string& out_dir) {
  return train_run(cfg, out_dir, RunKind::kPhase1, "");
}

TrainArtifacts workflow_train_phase2(const RunConfig& cfg, const std::string& phase1_checkpoint,
                                     const std::string& out_dir) {
  return train_run(cfg, out_dir, RunKind::kPhase2, phase1_checkpoint);
}

EvalReport workflow_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& data_dir,
                         EvalPath path, const std::string& out_dir) {
  validate_run_config(cfg);
  const Detector model = load_model(checkpoint);
  const std::vector<Scene> scenes = data_dir.empty() ? validation_scenes(cfg) : load_scenes(data_dir);

  fs::create_directories(out_dir);
  write_resolved_config(cfg, out_dir);
  std::vector<std::vector<Detection>> dets;
  const EvalReport report = run_eval(model, scenes, path, cfg.infer, cfg.nms_iou, &dets);
  const std::string tag = path_tag(path);
  write_text((fs::path(out_dir) / ("eval_" + tag + ".json")).string(), report_to_json(report) + "\n");
  write_detections_jsonl((fs::path(out_dir) / ("detections_" + tag + ".jsonl")).string(), dets);
  return report;
}

std::vector<Detection> run_infer(const Detector& model, const std::string& image_path, EvalPath path,
                                 const InferenceConfig& icfg, double nms_iou) {
  const Tensor image = read_ppm(image_path);
  Tape tape;
  const FlatOutputs out = model.forward(tape, image);
  return decode_path(model.snapshot(tape, out), image.dim(2), image.dim(1), path, icfg, nms_iou);
}

void run_heatmap(const Detector& model, const std::string& image_path, int level, HeatKind kind,
                 const std::string& out_path) {
  const Tensor image = read_ppm(image_path);
  Tape tape;
  const FlatOutputs out = model.forward(tape, image);
  export_heatmap(model.snapshot(tape, out), out.layout, level, kind, out_path);
}

Detector load_detector(const std::string& checkpoint) { return load_model(checkpoint); }

std::vector<Detection> workflow_infer(const std::string& checkpoint, const std::string& image_path, EvalPath path,
                                      const InferenceConfig& icfg, double nms_iou) {
  return run_infer(load_model(checkpoint), image_path, path, icfg, nms_iou);
}

void workflow_heatmap(const std::string& checkpoint, const std::string& image_path, int level, HeatKind kind,
                      const std::string& out_path) {
  run_heatmap(load_model(checkpoint), image_path, level, kind, out_path);
}

std::string workflow_describe(const std::string& checkpoint) { return load_model(checkpoint).describe(); }

std::string detections_to_json(const std::vector<Detection>& dets) {
  json arr = json::array();
  for (const Detection& d : dets) {
    arr.push_back({{"class", d.cls},
                   {"bbox", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                   {"score", d.score},
                   {"source", d.source == DetectionSource::kEndToEnd ? "end_to_end" : "one_to_many"}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace pssdet
