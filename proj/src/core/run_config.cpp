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

#include "core/run_config.hpp"

#include <fstream>
#include <stdexcept>

#include "nlohmann/json.hpp"

namespace pssdet {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& path, const char* why) {
  throw std::invalid_argument("run config: " + path + " " + why);
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) throw std::invalid_argument("unknown run config key: " + path + item.key());
  }
}

const json* field(const json& obj, const char* key) { return obj.contains(key) ? &obj.at(key) : nullptr; }

double num_at(const json& obj, const std::string& path, const char* key, double dflt) {
  const json* v = field(obj, key);
  if (!v) return dflt;
  if (!v->is_number()) bad_key(path + key, "must be a number");
  return v->get<double>();
}

int int_at(const json& obj, const std::string& path, const char* key, int dflt) {
  const json* v = field(obj, key);
  if (!v) return dflt;
  if (!v->is_number_integer()) bad_key(path + key, "must be an integer");
  return v->get<int>();
}

bool bool_at(const json& obj, const std::string& path, const char* key, bool dflt) {
  const json* v = field(obj, key);
  if (!v) return dflt;
  if (!v->is_boolean()) bad_key(path + key, "must be a boolean");
  return v->get<bool>();
}

std::string str_at(const json& obj, const std::string& path, const char* key, const std::string& dflt) {
  const json* v = field(obj, key);
  if (!v) return dflt;
  if (!v->is_string()) bad_key(path + key, "must be a string");
  return v->get<std::string>();
}

std::vector<int> int_list_at(const json& obj, const std::string& path, const char* key, std::vector<int> dflt) {
  const json* v = field(obj, key);
  if (!v) return dflt;
  if (!v->is_array()) bad_key(path + key, "must be an array of integers");
  std::vector<int> out;
  for (const json& e : *v) {
    if (!e.is_number_integer()) bad_key(path + key, "must be an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

Matcher matcher_from(const std::string& s, const std::string& path) {
  if (s == "hungarian") return Matcher::kHungarian;
  if (s == "top_one") return Matcher::kTopOne;
  bad_key(path, "must be \"hungarian\" or \"top_one\"");
}

QualityMode quality_from(const std::string& s, const std::string& path) {
  if (s == "mul") return QualityMode::kMul;
  if (s == "add") return QualityMode::kAdd;
  bad_key(path, "must be \"mul\" or \"add\"");
}

AssignerKind assigner_from(const std::string& s, const std::string& path) {
  if (s == "fcos") return AssignerKind::kFcos;
  if (s == "atss") return AssignerKind::kAtss;
  bad_key(path, "must be \"fcos\" or \"atss\"");
}

TrainMode mode_from(const std::string& s, const std::string& path) {
  if (s == "end_to_end") return TrainMode::kEndToEnd;
  if (s == "two_step") return TrainMode::kTwoStep;
  bad_key(path, "must be \"end_to_end\" or \"two_step\"");
}

TrainConfig train_from_json(const json& obj) {
  const std::string path = "train.";
  check_keys(obj, path,
             {"epochs", "batch_size", "lr", "lr_decay_epochs", "lr_decay_factor", "warmup_steps", "momentum",
              "weight_decay", "lambda1", "lambda2", "alpha", "matcher", "quality", "assigner", "detach_partners",
              "rank_margin", "rank_negatives", "mode", "phase1_epochs", "phase2_epochs", "use_hflip",
              "snapshot_every"});
  TrainConfig cfg;
  cfg.epochs = int_at(obj, path, "epochs", cfg.epochs);
  cfg.batch_size = int_at(obj, path, "batch_size", cfg.batch_size);
  cfg.lr = num_at(obj, path, "lr", cfg.lr);
  cfg.lr_decay_epochs = int_list_at(obj, path, "lr_decay_epochs", cfg.lr_decay_epochs);
  cfg.lr_decay_factor = num_at(obj, path, "lr_decay_factor", cfg.lr_decay_factor);
  cfg.warmup_steps = int_at(obj, path, "warmup_steps", cfg.warmup_steps);
  cfg.momentum = num_at(obj, path, "momentum", cfg.momentum);
  cfg.weight_decay = num_at(obj, path, "weight_decay", cfg.weight_decay);
  cfg.lambda1 = num_at(obj, path, "lambda1", cfg.lambda1);
  cfg.lambda2 = num_at(obj, path, "lambda2", cfg.lambda2);
  cfg.alpha = num_at(obj, path, "alpha", cfg.alpha);
  cfg.matcher = matcher_from(str_at(obj, path, "matcher", "hungarian"), path + "matcher");
  cfg.quality = quality_from(str_at(obj, path, "quality", "mul"), path + "quality");
  cfg.assigner = assigner_from(str_at(obj, path, "assigner", "fcos"), path + "assigner");
  cfg.detach_partners = bool_at(obj, path, "detach_partners", cfg.detach_partners);
  cfg.rank_margin = num_at(obj, path, "rank_margin", cfg.rank_margin);
  cfg.rank_negatives = int_at(obj, path, "rank_negatives", cfg.rank_negatives);
  cfg.mode = mode_from(str_at(obj, path, "mode", "end_to_end"), path + "mode");
  cfg.phase1_epochs = int_at(obj, path, "phase1_epochs", cfg.phase1_epochs);
  cfg.phase2_epochs = int_at(obj, path, "phase2_epochs", cfg.phase2_epochs);
  cfg.use_hflip = bool_at(obj, path, "use_hflip", cfg.use_hflip);
  cfg.snapshot_every = int_at(obj, path, "snapshot_every", cfg.snapshot_every);
  return cfg;
}

json train_to_json(const TrainConfig& cfg) {
  json obj;
  obj["epochs"] = cfg.epochs;
  obj["batch_size"] = cfg.batch_size;
  obj["lr"] = cfg.lr;
  obj["lr_decay_epochs"] = cfg.lr_decay_epochs;
  obj["lr_decay_factor"] = cfg.lr_decay_factor;
  obj["warmup_steps"] = cfg.warmup_steps;
  obj["momentum"] = cfg.momentum;
  obj["weight_decay"] = cfg.weight_decay;
  obj["lambda1"] = cfg.lambda1;
  obj["lambda2"] = cfg.lambda2;
  obj["alpha"] = cfg.alpha;
  obj["matcher"] = cfg.matcher == Matcher::kHungarian ? "hungarian" : "top_one";
  obj["quality"] = cfg.quality == QualityMode::kMul ? "mul" : "add";
  obj["assigner"] = cfg.assigner == AssignerKind::kFcos ? "fcos" : "atss";
  obj["detach_partners"] = cfg.detach_partners;
  obj["rank_margin"] = cfg.rank_margin;
  obj["rank_negatives"] = cfg.rank_negatives;
  obj["mode"] = cfg.mode == TrainMode::kEndToEnd ? "end_to_end" : "two_step";
  obj["phase1_epochs"] = cfg.phase1_epochs;
  obj["phase2_epochs"] = cfg.phase2_epochs;
  obj["use_hflip"] = cfg.use_hflip;
  obj["snapshot_every"] = cfg.snapshot_every;
  return obj;
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("run config: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("run config: top level must be an object");
  check_keys(doc, "", {"seed", "detector", "train", "data", "eval", "paths"});

  RunConfig cfg;
  if (const json* v = field(doc, "seed")) {
    if (!v->is_number_unsigned() && !v->is_number_integer()) bad_key("seed", "must be a non-negative integer");
    if (v->is_number_integer() && v->get<int64_t>() < 0) bad_key("seed", "must be a non-negative integer");
    cfg.seed = v->get<uint64_t>();
  }
  if (const json* v = field(doc, "detector")) {
    if (!v->is_object()) bad_key("detector", "must be an object");
    cfg.detector = config_from_json(v->dump());
  }
  if (const json* v = field(doc, "train")) {
    if (!v->is_object()) bad_key("train", "must be an object");
    cfg.train = train_from_json(*v);
  }
  if (const json* v = field(doc, "data")) {
    if (!v->is_object()) bad_key("data", "must be an object");
    const std::string path = "data.";
    check_keys(*v, path,
               {"height", "width", "min_objects", "max_objects", "overlap_cap", "noise", "train_count", "val_count"});
    cfg.data.height = int_at(*v, path, "height", cfg.data.height);
    cfg.data.width = int_at(*v, path, "width", cfg.data.width);
    cfg.data.min_objects = int_at(*v, path, "min_objects", cfg.data.min_objects);
    cfg.data.max_objects = int_at(*v, path, "max_objects", cfg.data.max_objects);
    cfg.data.overlap_cap = num_at(*v, path, "overlap_cap", cfg.data.overlap_cap);
    cfg.data.noise = num_at(*v, path, "noise", cfg.data.noise);
    cfg.train_count = int_at(*v, path, "train_count", cfg.train_count);
    cfg.val_count = int_at(*v, path, "val_count", cfg.val_count);
  }
  if (const json* v = field(doc, "eval")) {
    if (!v->is_object()) bad_key("eval", "must be an object");
    const std::string path = "eval.";
    check_keys(*v, path, {"score_floor", "top_k", "nms_iou"});
    cfg.infer.score_floor = num_at(*v, path, "score_floor", cfg.infer.score_floor);
    cfg.infer.top_k = int_at(*v, path, "top_k", cfg.infer.top_k);
    cfg.nms_iou = num_at(*v, path, "nms_iou", cfg.nms_iou);
  }
  if (const json* v = field(doc, "paths")) {
    if (!v->is_object()) bad_key("paths", "must be an object");
    const std::string path = "paths.";
    check_keys(*v, path, {"train_data", "val_data"});
    cfg.train_data_dir = str_at(*v, path, "train_data", cfg.train_data_dir);
    cfg.val_data_dir = str_at(*v, path, "val_data", cfg.val_data_dir);
  }
  cfg.train.seed = cfg.seed;
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json doc;
  doc["seed"] = cfg.seed;
  doc["detector"] = json::parse(config_to_json(cfg.detector));
  doc["train"] = train_to_json(cfg.train);
  doc["data"] = {{"height", cfg.data.height},           {"width", cfg.data.width},
                 {"min_objects", cfg.data.min_objects}, {"max_objects", cfg.data.max_objects},
                 {"overlap_cap", cfg.data.overlap_cap}, {"noise", cfg.data.noise},
                 {"train_count", cfg.train_count},      {"val_count", cfg.val_count}};
  doc["eval"] = {{"score_floor", cfg.infer.score_floor}, {"top_k", cfg.infer.top_k}, {"nms_iou", cfg.nms_iou}};
  doc["paths"] = {{"train_data", cfg.train_data_dir}, {"val_data", cfg.val_data_dir}};
  return doc.dump(2) + "\n";
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("run config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return run_config_from_json(text);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void validate_run_config(const RunConfig& cfg) {
  validate_config(cfg.detector);
  validate_config(cfg.train, cfg.detector);
  validate_config(cfg.data);
  if (cfg.train_count < 1) throw std::invalid_argument("run config: data.train_count must be at least 1");
  if (cfg.val_count < 1) throw std::invalid_argument("run config: data.val_count must be at least 1");
  if (cfg.infer.score_floor < 0 || cfg.infer.score_floor >= 1) {
    throw std::invalid_argument("run config: eval.score_floor must be in [0, 1)");
  }
  if (cfg.infer.top_k < 1) throw std::invalid_argument("run config: eval.top_k must be at least 1");
  if (cfg.nms_iou <= 0 || cfg.nms_iou >= 1) throw std::invalid_argument("run config: eval.nms_iou must be in (0, 1)");
}

}  // namespace pssdet
