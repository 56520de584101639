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

// Command line front end; all detector work goes through the C interface of
// the shared library. Exit codes: 0 success, 1 usage, 2 config, 3 runtime.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "pssdet/pssdet.h"

namespace {

using json = nlohmann::json;

// Frees strings the library hands back, including on early returns.
struct OwnedString {
  char* text = nullptr;
  ~OwnedString() { pssdet_free_string(text); }
  std::string str() const { return text ? text : ""; }
};

int exit_code_for(pssdet_status status) {
  switch (status) {
    case PSSDET_OK: return 0;
    case PSSDET_ERR_INVALID_ARG: return 1;
    case PSSDET_ERR_CONFIG: return 2;
    case PSSDET_ERR_RUNTIME: return 3;
  }
  return 3;
}

int report_failure(const std::string& step, pssdet_status status) {
  std::cerr << "pssdet " << step << ": " << pssdet_last_error() << "\n";
  return exit_code_for(status);
}

// Merges the optional config file with flag overrides; flags win. Returns
// exit code 0 with *out filled, or 2 with the problem printed.
int build_config_text(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                      const std::optional<double>& nms_iou, std::string* out) {
  json doc = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) {
      std::cerr << "pssdet config: cannot read " << config_path << "\n";
      return 2;
    }
    std::ostringstream text;
    text << in.rdbuf();
    try {
      doc = json::parse(text.str());
    } catch (const json::exception& e) {
      std::cerr << "pssdet config: " << config_path << " is not valid JSON: " << e.what() << "\n";
      return 2;
    }
  }
  if (seed) doc["seed"] = *seed;
  if (nms_iou) doc["eval"]["nms_iou"] = *nms_iou;
  *out = doc.dump();
  return 0;
}

// PSSDET_THREADS caps how many ablation cells train concurrently.
int env_threads() {
  const char* value = std::getenv("PSSDET_THREADS");
  if (!value) return 1;
  char* end = nullptr;
  const long n = std::strtol(value, &end, 10);
  if (end == value || *end != '\0' || n < 1) return 1;
  return static_cast<int>(n > 64 ? 64 : n);
}

// Pulls inference settings out of the resolved config so `infer` honours the
// same defaults as `eval`.
int inference_settings(const std::string& config_text, double* score_floor, int* top_k, double* nms_iou) {
  OwnedString resolved;
  const pssdet_status status = pssdet_resolve_config(config_text.c_str(), &resolved.text);
  if (status != PSSDET_OK) return report_failure("config", status);
  const json doc = json::parse(resolved.str());
  *score_floor = doc["eval"]["score_floor"].get<double>();
  *top_k = doc["eval"]["top_k"].get<int>();
  if (*nms_iou <= 0) *nms_iou = doc["eval"]["nms_iou"].get<double>();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NMS-free anchor-free detector: data synthesis, training, evaluation, ablations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string checkpoint;
  std::string data_dir;
  std::string image_path;
  std::string sweep;
  std::string kind = "product";
  std::optional<std::uint64_t> seed;
  std::optional<double> nms_iou;
  bool no_nms = false;
  int level = 0;

  OwnedString sweep_names;
  std::vector<std::string> sweeps;
  if (pssdet_ablation_sweeps(&sweep_names.text) == PSSDET_OK) {
    std::istringstream names(sweep_names.str());
    std::string name;
    while (names >> name) sweeps.push_back(name);
  }

  CLI::App* gen = app.add_subcommand("gen-data", "Write train/ and val/ PPM datasets with annotations");
  gen->add_option("--config", config_path, "Run config JSON file");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the config seed");

  CLI::App* train = app.add_subcommand("train", "Train a detector and evaluate both decode paths");
  train->add_option("--config", config_path, "Run config JSON file");
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--seed", seed, "Override the config seed");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("data", data_dir, "Dataset directory (defaults to the synthesized validation split)");
  eval->add_option("--config", config_path, "Run config JSON file");
  eval->add_option("--out", out_dir, "Output directory")->required();
  eval->add_option("--seed", seed, "Override the config seed");
  CLI::Option* eval_nms = eval->add_option("--nms", nms_iou, "One-to-many decode + NMS at this IoU");
  eval->add_flag("--no-nms", no_nms, "Selector score decode without suppression (default)")->excludes(eval_nms);

  CLI::App* infer = app.add_subcommand("infer", "Detect objects in one PPM image, JSON to stdout");
  infer->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("image", image_path, "PPM image")->required();
  infer->add_option("--config", config_path, "Run config JSON file (score floor, top-k)");
  infer->add_option("--out", out_dir, "Also write the detections JSON here");
  CLI::Option* infer_nms = infer->add_option("--nms", nms_iou, "One-to-many decode + NMS at this IoU");
  infer->add_flag("--no-nms", no_nms, "Selector score decode without suppression (default)")->excludes(infer_nms);

  CLI::App* heatmap = app.add_subcommand("heatmap", "Write a per-cell score map as a P5 PGM");
  heatmap->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  heatmap->add_option("image", image_path, "PPM image")->required();
  heatmap->add_option("--level", level, "Pyramid level index")->check(CLI::NonNegativeNumber);
  heatmap->add_option("--kind", kind, "Score factor to map")->check(CLI::IsMember({"cls", "pss", "product"}));
  heatmap->add_option("--out", out_dir, "Output PGM path")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "Train every variant of a named sweep and tabulate");
  ablate->add_option("sweep", sweep, "Sweep name")->required()->check(CLI::IsMember(sweeps));
  ablate->add_option("--config", config_path, "Run config JSON file");
  ablate->add_option("--out", out_dir, "Output directory")->required();
  ablate->add_option("--seed", seed, "Override the config seed");

  CLI::App* describe = app.add_subcommand("describe", "Print checkpoint architecture and parameter counts");
  describe->add_option("checkpoint", checkpoint, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  std::string config_text;
  {
    const int code = build_config_text(config_path, seed, nms_iou, &config_text);
    if (code != 0) return code;
  }

  if (app.got_subcommand(gen)) {
    OwnedString summary;
    const pssdet_status status = pssdet_gen_data(config_text.c_str(), out_dir.c_str(), &summary.text);
    if (status != PSSDET_OK) return report_failure("gen-data", status);
    std::cout << summary.str();
    return 0;
  }

  if (app.got_subcommand(train)) {
    OwnedString artifacts;
    const pssdet_status status = pssdet_train(config_text.c_str(), out_dir.c_str(), &artifacts.text);
    if (status != PSSDET_OK) return report_failure("train", status);
    std::cout << artifacts.str();
    return 0;
  }

  if (app.got_subcommand(eval)) {
    const pssdet_decode decode = nms_iou ? PSSDET_DECODE_ONE_TO_MANY_NMS : PSSDET_DECODE_END_TO_END;
    OwnedString report;
    const pssdet_status status =
        pssdet_eval(config_text.c_str(), checkpoint.c_str(), data_dir.c_str(), decode, out_dir.c_str(), &report.text);
    if (status != PSSDET_OK) return report_failure("eval", status);
    std::cout << report.str();
    return 0;
  }

  if (app.got_subcommand(infer)) {
    double score_floor = 0.01;
    int top_k = 100;
    double iou = nms_iou.value_or(-1.0);
    {
      const int code = inference_settings(config_text, &score_floor, &top_k, &iou);
      if (code != 0) return code;
    }
    const pssdet_decode decode = nms_iou ? PSSDET_DECODE_ONE_TO_MANY_NMS : PSSDET_DECODE_END_TO_END;
    pssdet_model* model = nullptr;
    pssdet_status status = pssdet_model_open(checkpoint.c_str(), &model);
    if (status != PSSDET_OK) return report_failure("infer", status);
    OwnedString dets;
    status = pssdet_model_infer(model, image_path.c_str(), decode, iou, score_floor, top_k, &dets.text);
    pssdet_model_close(model);
    if (status != PSSDET_OK) return report_failure("infer", status);
    if (!out_dir.empty()) {
      std::ofstream out(out_dir, std::ios::binary);
      if (!out) {
        std::cerr << "pssdet infer: cannot write " << out_dir << "\n";
        return 3;
      }
      out << dets.str();
    }
    std::cout << dets.str();
    return 0;
  }

  if (app.got_subcommand(heatmap)) {
    pssdet_model* model = nullptr;
    pssdet_status status = pssdet_model_open(checkpoint.c_str(), &model);
    if (status != PSSDET_OK) return report_failure("heatmap", status);
    status = pssdet_model_heatmap(model, image_path.c_str(), level, kind.c_str(), out_dir.c_str());
    pssdet_model_close(model);
    if (status != PSSDET_OK) return report_failure("heatmap", status);
    return 0;
  }

  if (app.got_subcommand(ablate)) {
    OwnedString table;
    const pssdet_status status =
        pssdet_ablate(config_text.c_str(), sweep.c_str(), out_dir.c_str(), env_threads(), &table.text);
    if (status != PSSDET_OK) return report_failure("ablate", status);
    std::cout << table.str();
    return 0;
  }

  if (app.got_subcommand(describe)) {
    pssdet_model* model = nullptr;
    pssdet_status status = pssdet_model_open(checkpoint.c_str(), &model);
    if (status != PSSDET_OK) return report_failure("describe", status);
    OwnedString text;
    status = pssdet_model_describe(model, &text.text);
    pssdet_model_close(model);
    if (status != PSSDET_OK) return report_failure("describe", status);
    std::cout << text.str();
    return 0;
  }

  return 1;
}
