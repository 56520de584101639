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

// C interface to the pssdet shared library. Every entry point returns a
// status code; on failure pssdet_last_error() holds a message for the calling
// thread until its next pssdet call. Strings handed back through char** out
// parameters are heap copies the caller releases with pssdet_free_string().

#ifndef PSSDET_PSSDET_H_
#define PSSDET_PSSDET_H_

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pssdet_status {
  PSSDET_OK = 0,
  PSSDET_ERR_INVALID_ARG = 1,  // null or out-of-range function arguments
  PSSDET_ERR_CONFIG = 2,      // config text rejected by parse or validation
  PSSDET_ERR_RUNTIME = 3,     // I/O, checkpoint, or training/eval failures
} pssdet_status;

// Message for the last failing call on this thread; never null.
const char* pssdet_last_error(void);

void pssdet_free_string(char* text);

// How raw head outputs become detections.
typedef enum pssdet_decode {
  PSSDET_DECODE_END_TO_END = 0,       // selector score path, no suppression
  PSSDET_DECODE_ONE_TO_MANY_NMS = 1,  // dense decode + class-wise NMS
  PSSDET_DECODE_ONE_TO_MANY_RAW = 2,  // dense decode, duplicates kept
} pssdet_decode;

// The default run config as a JSON document with every field materialized.
pssdet_status pssdet_default_config(char** out_json);

// Parses and validates config text (unknown keys rejected by full path) and
// returns the resolved document with defaults filled in.
pssdet_status pssdet_resolve_config(const char* config_json, char** out_json);

// Writes train/ and val/ PPM datasets plus annotations under out_dir.
// out_summary_json (optional) receives {"train_images","val_images",...}.
pssdet_status pssdet_gen_data(const char* config_json, const char* out_dir, char** out_summary_json);

// Full training run into out_dir: resolved config, per-step loss CSV,
// periodic eval snapshots, final checkpoint, and eval reports through both
// decode paths. out_artifacts_json (optional) receives the file map plus
// final metrics.
pssdet_status pssdet_train(const char* config_json, const char* out_dir, char** out_artifacts_json);

// Evaluates a checkpoint on a dataset directory, or on the synthesized
// validation split when data_dir is null or empty. Report and per-image
// detections are written under out_dir; out_report_json (optional) receives
// the report.
pssdet_status pssdet_eval(const char* config_json, const char* checkpoint_path, const char* data_dir,
                          pssdet_decode decode, const char* out_dir, char** out_report_json);

// Trains every variant of the named sweep (see pssdet_ablation_sweeps) under
// out_dir and returns the comparison table text. max_parallel > 1 trains that
// many variants concurrently, each single-threaded.
pssdet_status pssdet_ablate(const char* config_json, const char* sweep, const char* out_dir, int max_parallel,
                            char** out_table_text);

// Space-separated list of sweep names pssdet_ablate accepts.
pssdet_status pssdet_ablation_sweeps(char** out_names);

// Loaded checkpoint, usable for repeated inference without re-reading disk.
typedef struct pssdet_model pssdet_model;

pssdet_status pssdet_model_open(const char* checkpoint_path, pssdet_model** out_model);
void pssdet_model_close(pssdet_model* model);

// Human-readable architecture and parameter summary.
pssdet_status pssdet_model_describe(const pssdet_model* model, char** out_text);

// Runs one PPM image through the model; out_detections_json receives an array
// of {"class","bbox","score","source"}. score_floor and top_k bound the
// candidate pool; nms_iou only applies to PSSDET_DECODE_ONE_TO_MANY_NMS.
pssdet_status pssdet_model_infer(const pssdet_model* model, const char* image_path, pssdet_decode decode,
                                 double nms_iou, double score_floor, int top_k, char** out_detections_json);

// Writes the per-cell max-over-class score map of one pyramid level as a P5
// PGM. kind is "cls", "pss", or "product".
pssdet_status pssdet_model_heatmap(const pssdet_model* model, const char* image_path, int level, const char* kind,
                                   const char* out_pgm_path);

#ifdef __cplusplus
}
#endif

#endif  // PSSDET_PSSDET_H_
