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

#include "core/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "core/checkpoint.hpp"
#include "core/rng.hpp"

namespace pssdet {

namespace {

// Backbone block output channels; blocks 2..4 feed the pyramid laterals.
constexpr int kBackboneCh[4] = {16, 32, 64, 64};
// -ln((1 - 0.01) / 0.01): dense logit heads start near probability 0.01.
const double kPriorBias = -std::log(99.0);
// Logit high enough that the double-precision sigmoid saturates to 1.
constexpr double kAlwaysOnLogit = 800.0;
// Final prediction convs draw from this small centered uniform range so the
// configured bias, not the weights, decides the initial probabilities.
constexpr double kHeadWeightBound = 0.01;

std::string level_name(int stride) { return "s" + std::to_string(stride); }

}  // namespace

void validate_config(const DetectorConfig& cfg) {
  if (cfg.num_classes < 1) throw std::invalid_argument("num_classes must be at least 1");
  if (cfg.strides != std::vector<int>{4, 8, 16}) {
    throw std::invalid_argument("strides: this backbone provides exactly 4, 8, 16");
  }
  if (cfg.tower_depth < 1) throw std::invalid_argument("tower_depth must be at least 1");
  if (cfg.tower_channels < 1) throw std::invalid_argument("tower_channels must be at least 1");
  if (cfg.pss_depth < 1) throw std::invalid_argument("pss_depth must be at least 1");
  if (cfg.pss_channels < 1) throw std::invalid_argument("pss_channels must be at least 1");
}

std::string config_to_json(const DetectorConfig& cfg) {
  nlohmann::json j;
  j["num_classes"] = cfg.num_classes;
  j["strides"] = cfg.strides;
  j["tower_depth"] = cfg.tower_depth;
  j["tower_channels"] = cfg.tower_channels;
  j["pss_depth"] = cfg.pss_depth;
  j["pss_channels"] = cfg.pss_channels;
  j["pss_branch"] = cfg.pss_branch == PssBranch::kRegression ? "regression" : "classification";
  j["use_centerness"] = cfg.use_centerness;
  j["use_stop_grad"] = cfg.use_stop_grad;
  j["use_pss"] = cfg.use_pss;
  return j.dump();
}

DetectorConfig config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("detector config must be a JSON object");
  DetectorConfig cfg;
  for (const auto& [key, val] : j.items()) {
    if (key == "num_classes") {
      cfg.num_classes = val.get<int>();
    } else if (key == "strides") {
      cfg.strides = val.get<std::vector<int>>();
    } else if (key == "tower_depth") {
      cfg.tower_depth = val.get<int>();
    } else if (key == "tower_channels") {
      cfg.tower_channels = val.get<int>();
    } else if (key == "pss_depth") {
      cfg.pss_depth = val.get<int>();
    } else if (key == "pss_channels") {
      cfg.pss_channels = val.get<int>();
    } else if (key == "pss_branch") {
      const std::string s = val.get<std::string>();
      if (s == "regression") {
        cfg.pss_branch = PssBranch::kRegression;
      } else if (s == "classification") {
        cfg.pss_branch = PssBranch::kClassification;
      } else {
        throw std::invalid_argument("pss_branch must be \"regression\" or \"classification\", got \"" + s + "\"");
      }
    } else if (key == "use_centerness") {
      cfg.use_centerness = val.get<bool>();
    } else if (key == "use_stop_grad") {
      cfg.use_stop_grad = val.get<bool>();
    } else if (key == "use_pss") {
      cfg.use_pss = val.get<bool>();
    } else {
      throw std::invalid_argument("unknown detector config key: " + key);
    }
  }
  validate_config(cfg);
  return cfg;
}

void Detector::add_conv(const std::string& name, int out_ch, int in_ch, int k, uint64_t seed, double bias_init,
                        double weight_bound) {
  Tensor w({out_ch, in_ch, k, k});
  const double bound = weight_bound > 0 ? weight_bound : std::sqrt(6.0 / (static_cast<double>(in_ch) * k * k));
  // Every parameter draws from its own named stream, so optional heads do not
  // shift the initialization of the rest of the network.
  Rng rng = derived_rng(seed, name + ".w");
  for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  params_.add(name + ".w", std::move(w));
  params_.add(name + ".b", Tensor::full({out_ch}, bias_init));
}

Detector::Detector(DetectorConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  validate_config(cfg_);
  int in = 3;
  for (int i = 0; i < 4; ++i) {
    add_conv("backbone.block" + std::to_string(i + 1), kBackboneCh[i], in, 3, seed, 0.0);
    in = kBackboneCh[i];
  }
  for (int li = 0; li < 3; ++li) {
    add_conv("fpn." + level_name(cfg_.strides[static_cast<size_t>(li)]), cfg_.tower_channels, kBackboneCh[li + 1], 1,
             seed, 0.0);
  }
  for (int d = 0; d < cfg_.tower_depth; ++d) {
    add_conv("tower.cls." + std::to_string(d), cfg_.tower_channels, cfg_.tower_channels, 3, seed, 0.0);
  }
  for (int d = 0; d < cfg_.tower_depth; ++d) {
    add_conv("tower.reg." + std::to_string(d), cfg_.tower_channels, cfg_.tower_channels, 3, seed, 0.0);
  }
  // Prediction convs start near zero so the bias sets the initial output.
  add_conv("head.cls", cfg_.num_classes, cfg_.tower_channels, 3, seed, kPriorBias, kHeadWeightBound);
  add_conv("head.reg", 4, cfg_.tower_channels, 3, seed, 0.0, kHeadWeightBound);
  if (cfg_.use_centerness) add_conv("head.ctr", 1, cfg_.tower_channels, 3, seed, 0.0, kHeadWeightBound);
  for (int s : cfg_.strides) params_.add("head.scale." + level_name(s), Tensor({1}, {1.0}));
  if (cfg_.use_pss) {
    int pin = cfg_.tower_channels;
    for (int d = 0; d < cfg_.pss_depth; ++d) {
      add_conv("pss." + std::to_string(d), cfg_.pss_channels, pin, 3, seed, 0.0);
      pin = cfg_.pss_channels;
    }
    add_conv("pss.out", 1, pin, 3, seed, kPriorBias, kHeadWeightBound);
  }
}

int64_t Detector::param_count() const {
  int64_t n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

std::string Detector::describe() const {
  std::ostringstream os;
  size_t widest = 0;
  for (const Param& p : params_) widest = std::max(widest, p.name.size());
  for (const Param& p : params_) {
    os << p.name << std::string(widest - p.name.size() + 2, ' ') << shape_to_string(p.value.shape()) << "  "
       << p.value.size() << "\n";
  }
  os << "total parameters: " << param_count() << "\n";
  return os.str();
}

bool Detector::is_pss_param(std::string_view name) { return name.rfind("pss.", 0) == 0; }

std::vector<uint8_t> Detector::pss_mask(bool train_pss) const {
  std::vector<uint8_t> mask(static_cast<size_t>(params_.size()));
  for (int i = 0; i < params_.size(); ++i) {
    mask[static_cast<size_t>(i)] = is_pss_param(params_.at(i).name) == train_pss ? 1 : 0;
  }
  return mask;
}

FlatOutputs Detector::forward(Tape& tape, const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("image must be (3, H, W), got " + shape_to_string(image.shape()));
  }
  const int h = image.dim(1);
  const int w = image.dim(2);
  const int smax = cfg_.strides.back();
  if (h % smax != 0 || w % smax != 0) {
    throw std::invalid_argument("image size " + std::to_string(h) + "x" + std::to_string(w) +
                                " is not divisible by stride " + std::to_string(smax));
  }

  std::vector<Var> pv(static_cast<size_t>(params_.size()));
  for (int i = 0; i < params_.size(); ++i) pv[static_cast<size_t>(i)] = tape.leaf(params_.at(i).value);
  auto P = [&](const std::string& name) -> Var {
    const int i = params_.index_of(name);
    if (i < 0) throw std::logic_error("missing parameter " + name);
    return pv[static_cast<size_t>(i)];
  };
  auto cbr = [&](Var x, const std::string& name, int stride, int pad) {
    return tape.relu(tape.conv2d(x, P(name + ".w"), P(name + ".b"), stride, pad));
  };

  Var x = tape.reshape(tape.leaf(image), {1, 3, h, w});
  Var c1 = cbr(x, "backbone.block1", 2, 1);
  Var c2 = cbr(c1, "backbone.block2", 2, 1);
  Var c3 = cbr(c2, "backbone.block3", 2, 1);
  Var c4 = cbr(c3, "backbone.block4", 2, 1);

  Var p16 = tape.conv2d(c4, P("fpn.s16.w"), P("fpn.s16.b"), 1, 0);
  Var p8 = tape.add(tape.conv2d(c3, P("fpn.s8.w"), P("fpn.s8.b"), 1, 0), tape.upsample2x(p16));
  Var p4 = tape.add(tape.conv2d(c2, P("fpn.s4.w"), P("fpn.s4.b"), 1, 0), tape.upsample2x(p8));
  const Var pyramid[3] = {p4, p8, p16};

  AnchorLayout layout(h, w, cfg_.strides);
  std::vector<Var> cls_parts, ctr_parts, pss_parts;
  std::vector<Var> reg_parts[4];
  for (int li = 0; li < 3; ++li) {
    Var ct = pyramid[li];
    Var rt = pyramid[li];
    for (int d = 0; d < cfg_.tower_depth; ++d) ct = cbr(ct, "tower.cls." + std::to_string(d), 1, 1);
    for (int d = 0; d < cfg_.tower_depth; ++d) rt = cbr(rt, "tower.reg." + std::to_string(d), 1, 1);

    const int cells = layout.level(li).cells();

    Var cls_map = tape.conv2d(ct, P("head.cls.w"), P("head.cls.b"), 1, 1);
    // (1, C, h, w) to cell-major (cells * C): entry i*C + c reads channel c.
    std::vector<int64_t> perm(static_cast<size_t>(cells) * cfg_.num_classes);
    for (int i = 0; i < cells; ++i) {
      for (int c = 0; c < cfg_.num_classes; ++c) {
        perm[static_cast<size_t>(i) * cfg_.num_classes + c] = static_cast<int64_t>(c) * cells + i;
      }
    }
    cls_parts.push_back(tape.gather(tape.reshape(cls_map, {cells * cfg_.num_classes}), std::move(perm)));

    Var reg_map = tape.exp(tape.mul(tape.conv2d(rt, P("head.reg.w"), P("head.reg.b"), 1, 1),
                                    P("head.scale." + level_name(cfg_.strides[static_cast<size_t>(li)]))));
    for (int c = 0; c < 4; ++c) {
      reg_parts[c].push_back(tape.reshape(tape.channel_slice(reg_map, c, c + 1), {cells}));
    }

    if (cfg_.use_centerness) {
      ctr_parts.push_back(tape.reshape(tape.conv2d(rt, P("head.ctr.w"), P("head.ctr.b"), 1, 1), {cells}));
    } else {
      ctr_parts.push_back(tape.stop_gradient(tape.leaf(Tensor::full({cells}, kAlwaysOnLogit))));
    }

    if (cfg_.use_pss) {
      Var src = cfg_.pss_branch == PssBranch::kRegression ? rt : ct;
      if (cfg_.use_stop_grad) src = tape.stop_gradient(src);
      for (int d = 0; d < cfg_.pss_depth; ++d) src = cbr(src, "pss." + std::to_string(d), 1, 1);
      pss_parts.push_back(tape.reshape(tape.conv2d(src, P("pss.out.w"), P("pss.out.b"), 1, 1), {cells}));
    }
  }

  const int total = static_cast<int>(layout.total());
  Var cls = tape.reshape(tape.concat(cls_parts), {total, cfg_.num_classes});
  Var ctr = tape.concat(ctr_parts);
  Var pss;
  if (cfg_.use_pss) pss = tape.concat(pss_parts);
  LtrbVars reg{tape.concat(reg_parts[0]), tape.concat(reg_parts[1]), tape.concat(reg_parts[2]),
               tape.concat(reg_parts[3])};
  return FlatOutputs{cls, ctr, pss, reg, std::move(pv), std::move(layout)};
}

OutputSnapshot Detector::snapshot(const Tape& tape, const FlatOutputs& out) const {
  const auto total = static_cast<size_t>(out.layout.total());
  const int c = cfg_.num_classes;
  auto sig = [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };

  OutputSnapshot snap;
  snap.num_classes = c;
  const Tensor& cls = tape.value(out.cls);
  snap.cls_prob.resize(total * static_cast<size_t>(c));
  for (size_t i = 0; i < snap.cls_prob.size(); ++i) snap.cls_prob[i] = sig(cls[static_cast<int64_t>(i)]);
  const Tensor& ctr = tape.value(out.ctr);
  snap.ctr_prob.resize(total);
  for (size_t i = 0; i < total; ++i) snap.ctr_prob[i] = sig(ctr[static_cast<int64_t>(i)]);
  snap.pss_prob.assign(total, 1.0);
  if (out.pss.valid()) {
    const Tensor& pss = tape.value(out.pss);
    for (size_t i = 0; i < total; ++i) snap.pss_prob[i] = sig(pss[static_cast<int64_t>(i)]);
  }
  const Tensor& l = tape.value(out.reg.l);
  const Tensor& t = tape.value(out.reg.t);
  const Tensor& r = tape.value(out.reg.r);
  const Tensor& b = tape.value(out.reg.b);
  snap.boxes.resize(total);
  for (size_t i = 0; i < total; ++i) {
    const AnchorPoint p = out.layout.point(static_cast<int>(i));
    const auto k = static_cast<int64_t>(i);
    snap.boxes[i] = decode_ltrb(p.x, p.y, LtrbTarget{l[k], t[k], r[k], b[k]}, p.stride);
  }
  return snap;
}

void Detector::save(const std::string& path) const { save_checkpoint(path, params_, config_to_json(cfg_)); }

Detector Detector::load(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.config_json.empty()) throw std::runtime_error(path + ": checkpoint carries no detector config");
  Detector det(config_from_json(ckpt.config_json), 0);
  restore_params(det.params_, ckpt);
  return det;
}

}  // namespace pssdet
