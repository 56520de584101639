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

#pragma once

#include <string>
#include <vector>

#include "core/eval.hpp"
#include "core/inference.hpp"
#include "core/model.hpp"
#include "core/run_config.hpp"

namespace pssdet {

// Which decoding route produces the detections under evaluation.
enum class EvalPath { kEndToEnd, kOneToManyNms, kOneToManyRaw };

// Reads a generated dataset directory (annotations.json + ppm files) back
// into memory.
std::vector<Scene> load_scenes(const std::string& dir);

// Training halves: explicit directories when configured, otherwise in-memory
// synthesis from seeds derived of the run seed. Directories regenerate
// bit-identically from the same seed; in-memory scenes skip the 8-bit
// quantization a written image goes through.
std::vector<Scene> training_scenes(const RunConfig& cfg);
std::vector<Scene> validation_scenes(const RunConfig& cfg);

struct GenDataSummary {
  int train_images = 0;
  int val_images = 0;
  std::string train_dir;
  std::string val_dir;
};

// Writes train/ and val/ dataset directories plus the resolved config.
GenDataSummary workflow_gen_data(const RunConfig& cfg, const std::string& out_dir);

// Runs one inference path over the scenes. Timing fields are per-image
// means: forward_ms is graph evaluation, post_ms is decoding (for the
// end-to-end path that is exactly the score ranking; for the classic path
// it includes the suppression pass). Detections land in dets_out when given.
EvalReport run_eval(const Detector& model, const std::vector<Scene>& scenes, EvalPath path,
                    const InferenceConfig& icfg, double nms_iou,
                    std::vector<std::vector<Detection>>* dets_out = nullptr);

struct TrainArtifacts {
  std::string checkpoint_path;
  std::string log_path;        // CSV, one row per optimizer step
  std::string snapshots_path;  // JSONL, one validation record per snapshot
  EvalReport end_to_end;       // final validation through the NMS-free path
  EvalReport one_to_many_nms;  // final validation through the classic path
};

// Trains per cfg.train.mode, writing checkpoint.pssd, train_log.csv,
// eval_snapshots.jsonl, resolved_config.json and the two final validation
// reports into out_dir.
TrainArtifacts workflow_train(const RunConfig& cfg, const std::string& out_dir);

// Two-step pieces for sweeps: phase 1 ends at phase1.pssd; phase 2 resumes
// from such a checkpoint, keeping its detector parameters and fitting the
// selector head. The donor must share every non-selector parameter shape.
TrainArtifacts workflow_train_phase1(const RunConfig& cfg, const std::string& out_dir);
TrainArtifacts workflow_train_phase2(const RunConfig& cfg, const std::string& phase1_checkpoint,
                                     const std::string& out_dir);

// Evaluates a checkpoint on a dataset directory (or, when dir is empty, the
// synthesized validation split) and writes report JSON + detections.
EvalReport workflow_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& data_dir,
                         EvalPath path, const std::string& out_dir);

std::vector<Detection> workflow_infer(const std::string& checkpoint, const std::string& image_path, EvalPath path,
                                      const InferenceConfig& icfg, double nms_iou);

void workflow_heatmap(const std::string& checkpoint, const std::string& image_path, int level, HeatKind kind,
                      const std::string& out_path);

// Handle-style variants for callers that keep a loaded model around.
Detector load_detector(const std::string& checkpoint);
std::vector<Detection> run_infer(const Detector& model, const std::string& image_path, EvalPath path,
                                 const InferenceConfig& icfg, double nms_iou);
void run_heatmap(const Detector& model, const std::string& image_path, int level, HeatKind kind,
                 const std::string& out_path);

std::string workflow_describe(const std::string& checkpoint);

std::string detections_to_json(const std::vector<Detection>& dets);

}  // namespace pssdet
