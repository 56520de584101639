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

#include "pssdet/pssdet.h"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "core/ablate.hpp"
#include "core/eval.hpp"
#include "core/model.hpp"
#include "core/run_config.hpp"
#include "core/workflows.hpp"

// The opaque handle behind the C interface.
struct pssdet_model {
  pssdet::Detector detector;
};

namespace {

using json = nlohmann::json;

thread_local std::string g_last_error = "";

// Malloc so C callers pairing with free() through pssdet_free_string work
// regardless of which runtime allocated.
char* dup_string(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

pssdet_status fail(pssdet_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// invalid_argument walks out of config parsing and validation; everything
// else (missing files, bad checkpoints, non-finite losses) is runtime.
template <typename Fn>
pssdet_status guarded(Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    return fail(PSSDET_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(PSSDET_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(PSSDET_ERR_RUNTIME, "unknown error");
  }
  g_last_error.clear();
  return PSSDET_OK;
}

bool put_string(char** out, const std::string& text) {
  if (!out) return true;  // caller declined the payload
  *out = dup_string(text);
  return *out != nullptr;
}

pssdet::RunConfig parse_config(const char* config_json) {
  pssdet::RunConfig cfg = pssdet::run_config_from_json(config_json);
  pssdet::validate_run_config(cfg);
  return cfg;
}

bool decode_from(pssdet_decode decode, pssdet::EvalPath* out) {
  switch (decode) {
    case PSSDET_DECODE_END_TO_END: *out = pssdet::EvalPath::kEndToEnd; return true;
    case PSSDET_DECODE_ONE_TO_MANY_NMS: *out = pssdet::EvalPath::kOneToManyNms; return true;
    case PSSDET_DECODE_ONE_TO_MANY_RAW: *out = pssdet::EvalPath::kOneToManyRaw; return true;
  }
  return false;
}

json report_json(const pssdet::EvalReport& report) { return json::parse(pssdet::report_to_json(report)); }

}  // namespace

extern "C" {

const char* pssdet_last_error(void) { return g_last_error.c_str(); }

void pssdet_free_string(char* text) { std::free(text); }

pssdet_status pssdet_default_config(char** out_json) {
  if (!out_json) return fail(PSSDET_ERR_INVALID_ARG, "out_json is null");
  *out_json = nullptr;
  return guarded([&] {
    if (!put_string(out_json, pssdet::run_config_to_json(pssdet::RunConfig{}))) throw std::bad_alloc();
  });
}

pssdet_status pssdet_resolve_config(const char* config_json, char** out_json) {
  if (!config_json) return fail(PSSDET_ERR_INVALID_ARG, "config_json is null");
  if (!out_json) return fail(PSSDET_ERR_INVALID_ARG, "out_json is null");
  *out_json = nullptr;
  return guarded([&] {
    if (!put_string(out_json, pssdet::run_config_to_json(parse_config(config_json)))) throw std::bad_alloc();
  });
}

pssdet_status pssdet_gen_data(const char* config_json, const char* out_dir, char** out_summary_json) {
  if (!config_json) return fail(PSSDET_ERR_INVALID_ARG, "config_json is null");
  if (!out_dir) return fail(PSSDET_ERR_INVALID_ARG, "out_dir is null");
  if (out_summary_json) *out_summary_json = nullptr;
  return guarded([&] {
    const pssdet::GenDataSummary summary = pssdet::workflow_gen_data(parse_config(config_json), out_dir);
    json doc = {{"train_images", summary.train_images},
                {"val_images", summary.val_images},
                {"train_dir", summary.train_dir},
                {"val_dir", summary.val_dir}};
    if (!put_string(out_summary_json, doc.dump(2) + "\n")) throw std::bad_alloc();
  });
}

pssdet_status pssdet_train(const char* config_json, const char* out_dir, char** out_artifacts_json) {
  if (!config_json) return fail(PSSDET_ERR_INVALID_ARG, "config_json is null");
  if (!out_dir) return fail(PSSDET_ERR_INVALID_ARG, "out_dir is null");
  if (out_artifacts_json) *out_artifacts_json = nullptr;
  return guarded([&] {
    const pssdet::TrainArtifacts art = pssdet::workflow_train(parse_config(config_json), out_dir);
    json doc = {{"checkpoint", art.checkpoint_path},
                {"log", art.log_path},
                {"snapshots", art.snapshots_path},
                {"end_to_end", report_json(art.end_to_end)},
                {"one_to_many_nms", report_json(art.one_to_many_nms)}};
    if (!put_string(out_artifacts_json, doc.dump(2) + "\n")) throw std::bad_alloc();
  });
}

pssdet_status pssdet_eval(const char* config_json, const char* checkpoint_path, const char* data_dir,
                          pssdet_decode decode, const char* out_dir, char** out_report_json) {
  if (!config_json) return fail(PSSDET_ERR_INVALID_ARG, "config_json is null");
  if (!checkpoint_path) return fail(PSSDET_ERR_INVALID_ARG, "checkpoint_path is null");
  if (!out_dir) return fail(PSSDET_ERR_INVALID_ARG, "out_dir is null");
  pssdet::EvalPath path;
  if (!decode_from(decode, &path)) return fail(PSSDET_ERR_INVALID_ARG, "decode is not a pssdet_decode value");
  if (out_report_json) *out_report_json = nullptr;
  return guarded([&] {
    const pssdet::EvalReport report =
        pssdet::workflow_eval(parse_config(config_json), checkpoint_path, data_dir ? data_dir : "", path, out_dir);
    if (!put_string(out_report_json, pssdet::report_to_json(report) + "\n")) throw std::bad_alloc();
  });
}

pssdet_status pssdet_ablate(const char* config_json, const char* sweep, const char* out_dir, int max_parallel,
                            char** out_table_text) {
  if (!config_json) return fail(PSSDET_ERR_INVALID_ARG, "config_json is null");
  if (!sweep) return fail(PSSDET_ERR_INVALID_ARG, "sweep is null");
  if (!out_dir) return fail(PSSDET_ERR_INVALID_ARG, "out_dir is null");
  if (out_table_text) *out_table_text = nullptr;
  return guarded([&] {
    const std::string table = pssdet::workflow_ablate(parse_config(config_json), sweep, out_dir, max_parallel);
    if (!put_string(out_table_text, table)) throw std::bad_alloc();
  });
}

pssdet_status pssdet_ablation_sweeps(char** out_names) {
  if (!out_names) return fail(PSSDET_ERR_INVALID_ARG, "out_names is null");
  *out_names = nullptr;
  return guarded([&] {
    std::string names;
    for (const std::string& name : pssdet::ablation_sweeps()) {
      if (!names.empty()) names += " ";
      names += name;
    }
    if (!put_string(out_names, names)) throw std::bad_alloc();
  });
}

pssdet_status pssdet_model_open(const char* checkpoint_path, pssdet_model** out_model) {
  if (!checkpoint_path) return fail(PSSDET_ERR_INVALID_ARG, "checkpoint_path is null");
  if (!out_model) return fail(PSSDET_ERR_INVALID_ARG, "out_model is null");
  *out_model = nullptr;
  return guarded([&] { *out_model = new pssdet_model{pssdet::load_detector(checkpoint_path)}; });
}

void pssdet_model_close(pssdet_model* model) { delete model; }

pssdet_status pssdet_model_describe(const pssdet_model* model, char** out_text) {
  if (!model) return fail(PSSDET_ERR_INVALID_ARG, "model is null");
  if (!out_text) return fail(PSSDET_ERR_INVALID_ARG, "out_text is null");
  *out_text = nullptr;
  return guarded([&] {
    if (!put_string(out_text, model->detector.describe())) throw std::bad_alloc();
  });
}

pssdet_status pssdet_model_infer(const pssdet_model* model, const char* image_path, pssdet_decode decode,
                                 double nms_iou, double score_floor, int top_k, char** out_detections_json) {
  if (!model) return fail(PSSDET_ERR_INVALID_ARG, "model is null");
  if (!image_path) return fail(PSSDET_ERR_INVALID_ARG, "image_path is null");
  pssdet::EvalPath path;
  if (!decode_from(decode, &path)) return fail(PSSDET_ERR_INVALID_ARG, "decode is not a pssdet_decode value");
  if (!(score_floor >= 0.0 && score_floor < 1.0)) return fail(PSSDET_ERR_INVALID_ARG, "score_floor must be in [0, 1)");
  if (top_k < 1) return fail(PSSDET_ERR_INVALID_ARG, "top_k must be at least 1");
  if (path == pssdet::EvalPath::kOneToManyNms && !(nms_iou > 0.0 && nms_iou < 1.0)) {
    return fail(PSSDET_ERR_INVALID_ARG, "nms_iou must be in (0, 1)");
  }
  if (!out_detections_json) return fail(PSSDET_ERR_INVALID_ARG, "out_detections_json is null");
  *out_detections_json = nullptr;
  return guarded([&] {
    pssdet::InferenceConfig icfg;
    icfg.score_floor = score_floor;
    icfg.top_k = top_k;
    const std::vector<pssdet::Detection> dets = pssdet::run_infer(model->detector, image_path, path, icfg, nms_iou);
    if (!put_string(out_detections_json, pssdet::detections_to_json(dets))) throw std::bad_alloc();
  });
}

pssdet_status pssdet_model_heatmap(const pssdet_model* model, const char* image_path, int level, const char* kind,
                                   const char* out_pgm_path) {
  if (!model) return fail(PSSDET_ERR_INVALID_ARG, "model is null");
  if (!image_path) return fail(PSSDET_ERR_INVALID_ARG, "image_path is null");
  if (!kind) return fail(PSSDET_ERR_INVALID_ARG, "kind is null");
  if (!out_pgm_path) return fail(PSSDET_ERR_INVALID_ARG, "out_pgm_path is null");
  pssdet::HeatKind heat;
  if (std::strcmp(kind, "cls") == 0) {
    heat = pssdet::HeatKind::kCls;
  } else if (std::strcmp(kind, "pss") == 0) {
    heat = pssdet::HeatKind::kPss;
  } else if (std::strcmp(kind, "product") == 0) {
    heat = pssdet::HeatKind::kProduct;
  } else {
    return fail(PSSDET_ERR_INVALID_ARG, "kind must be cls, pss, or product");
  }
  return guarded([&] { pssdet::run_heatmap(model->detector, image_path, level, heat, out_pgm_path); });
}

}  // extern "C"
