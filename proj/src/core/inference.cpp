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

#include "core/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace pssdet {

namespace {

Box clip_box(const Box& b, int img_w, int img_h) {
  return Box{std::clamp(b.x1, 0.0, static_cast<double>(img_w)), std::clamp(b.y1, 0.0, static_cast<double>(img_h)),
             std::clamp(b.x2, 0.0, static_cast<double>(img_w)), std::clamp(b.y2, 0.0, static_cast<double>(img_h))};
}

struct Candidate {
  double score;
  int anchor;
  int cls;
};

// Scores decode in a fixed order: higher score first, then anchor, then class.
std::vector<Detection> rank_and_clip(std::vector<Candidate> cands, const OutputSnapshot& snap, int img_w, int img_h,
                                     int top_k, DetectionSource source) {
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.anchor != b.anchor) return a.anchor < b.anchor;
    return a.cls < b.cls;
  });
  if (static_cast<int>(cands.size()) > top_k) cands.resize(static_cast<size_t>(top_k));
  std::vector<Detection> dets;
  dets.reserve(cands.size());
  for (const Candidate& c : cands) {
    dets.push_back(Detection{c.cls, clip_box(snap.boxes[static_cast<size_t>(c.anchor)], img_w, img_h), c.score, source});
  }
  return dets;
}

void check_decode_args(const OutputSnapshot& snap, const InferenceConfig& cfg) {
  if (snap.num_classes < 1) throw std::invalid_argument("snapshot has no classes");
  if (cfg.top_k < 1) throw std::invalid_argument("top_k must be at least 1");
  if (cfg.score_floor < 0 || cfg.score_floor >= 1) throw std::invalid_argument("score_floor must be in [0, 1)");
}

}  // namespace

std::vector<Detection> decode_end_to_end(const OutputSnapshot& snap, int img_w, int img_h,
                                         const InferenceConfig& cfg) {
  check_decode_args(snap, cfg);
  const int anchors = static_cast<int>(snap.boxes.size());
  std::vector<Candidate> cands;
  for (int a = 0; a < anchors; ++a) {
    const double base = snap.pss_prob[static_cast<size_t>(a)] * snap.ctr_prob[static_cast<size_t>(a)];
    for (int c = 0; c < snap.num_classes; ++c) {
      const double s = base * snap.cls_at(a, c);
      if (s >= cfg.score_floor) cands.push_back(Candidate{s, a, c});
    }
  }
  return rank_and_clip(std::move(cands), snap, img_w, img_h, cfg.top_k, DetectionSource::kEndToEnd);
}

std::vector<Detection> decode_one_to_many(const OutputSnapshot& snap, int img_w, int img_h,
                                          const InferenceConfig& cfg, bool apply_nms, double nms_iou) {
  check_decode_args(snap, cfg);
  const int anchors = static_cast<int>(snap.boxes.size());
  std::vector<Candidate> cands;
  for (int a = 0; a < anchors; ++a) {
    const double base = snap.ctr_prob[static_cast<size_t>(a)];
    for (int c = 0; c < snap.num_classes; ++c) {
      const double s = base * snap.cls_at(a, c);
      if (s >= cfg.score_floor) cands.push_back(Candidate{s, a, c});
    }
  }
  // rank everything first so NMS sees the full candidate pool, then truncate
  std::vector<Detection> dets =
      rank_and_clip(std::move(cands), snap, img_w, img_h, std::numeric_limits<int>::max(), DetectionSource::kOneToMany);
  if (apply_nms) dets = nms(std::move(dets), nms_iou);
  if (static_cast<int>(dets.size()) > cfg.top_k) dets.resize(static_cast<size_t>(cfg.top_k));
  return dets;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  if (iou_threshold <= 0 || iou_threshold >= 1) throw std::invalid_argument("nms threshold must be in (0, 1)");
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.cls == d.cls && iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

void export_heatmap(const OutputSnapshot& snap, const AnchorLayout& layout, int level, HeatKind kind,
                    const std::string& path) {
  if (level < 0 || level >= layout.num_levels()) {
    throw std::invalid_argument("level " + std::to_string(level) + " out of range, have " +
                                std::to_string(layout.num_levels()));
  }
  const LevelLayout& ll = layout.level(level);
  std::vector<double> vals(static_cast<size_t>(ll.cells()));
  for (int i = 0; i < ll.cells(); ++i) {
    const int a = ll.offset + i;
    double best = 0;
    for (int c = 0; c < snap.num_classes; ++c) best = std::max(best, snap.cls_at(a, c));
    switch (kind) {
      case HeatKind::kCls:
        vals[static_cast<size_t>(i)] = best;
        break;
      case HeatKind::kPss:
        vals[static_cast<size_t>(i)] = snap.pss_prob[static_cast<size_t>(a)];
        break;
      case HeatKind::kProduct:
        vals[static_cast<size_t>(i)] =
            best * snap.pss_prob[static_cast<size_t>(a)] * snap.ctr_prob[static_cast<size_t>(a)];
        break;
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<uint8_t> bytes(vals.size(), 128);
  if (hi > lo) {
    for (size_t i = 0; i < vals.size(); ++i) {
      bytes[i] = static_cast<uint8_t>(std::lround((vals[i] - lo) / (hi - lo) * 255.0));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P5\n" << ll.w << " " << ll.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace pssdet
