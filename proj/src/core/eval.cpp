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

#include "core/eval.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace pssdet {

namespace {

struct RankedDet {
  double score;
  int image;
  int idx;
};

std::vector<RankedDet> ranked_for_class(const std::vector<std::vector<Detection>>& dets, int cls) {
  std::vector<RankedDet> out;
  for (size_t i = 0; i < dets.size(); ++i) {
    for (size_t j = 0; j < dets[i].size(); ++j) {
      if (dets[i][j].cls == cls) out.push_back(RankedDet{dets[i][j].score, static_cast<int>(i), static_cast<int>(j)});
    }
  }
  std::sort(out.begin(), out.end(), [](const RankedDet& a, const RankedDet& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.idx < b.idx;
  });
  return out;
}

// Descending-score greedy matching: each detection claims the unmatched
// same-class ground truth of highest IoU at or above the threshold.
std::vector<char> greedy_match(const std::vector<RankedDet>& ranked, const std::vector<std::vector<Detection>>& dets,
                               const std::vector<std::vector<GtInstance>>& gts, int cls, double thr,
                               int* matched_count) {
  std::vector<std::vector<char>> taken(gts.size());
  for (size_t i = 0; i < gts.size(); ++i) taken[i].assign(gts[i].size(), 0);
  std::vector<char> tp(ranked.size(), 0);
  int matched = 0;
  for (size_t r = 0; r < ranked.size(); ++r) {
    const RankedDet& rd = ranked[r];
    const Box& db = dets[static_cast<size_t>(rd.image)][static_cast<size_t>(rd.idx)].box;
    const auto& img_gts = gts[static_cast<size_t>(rd.image)];
    int best = -1;
    double best_iou = 0;
    for (size_t g = 0; g < img_gts.size(); ++g) {
      if (img_gts[g].cls != cls || taken[static_cast<size_t>(rd.image)][g]) continue;
      const double v = iou(db, img_gts[g].box);
      if (v >= thr && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      taken[static_cast<size_t>(rd.image)][static_cast<size_t>(best)] = 1;
      tp[r] = 1;
      ++matched;
    }
  }
  if (matched_count != nullptr) *matched_count = matched;
  return tp;
}

double ap_101(const std::vector<char>& tp, int gt_count) {
  const size_t n = tp.size();
  std::vector<double> prec(n), rec(n);
  int cum = 0;
  for (size_t i = 0; i < n; ++i) {
    cum += tp[i];
    prec[i] = static_cast<double>(cum) / static_cast<double>(i + 1);
    rec[i] = static_cast<double>(cum) / gt_count;
  }
  for (size_t i = n; i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double total = 0;
  size_t k = 0;
  for (int g = 0; g <= 100; ++g) {
    const double r = g / 100.0;
    while (k < n && rec[k] < r) ++k;
    if (k < n) total += prec[k];
  }
  return total / 101.0;
}

std::vector<std::vector<Detection>> truncate_per_image(const std::vector<std::vector<Detection>>& dets, int max_dets) {
  std::vector<std::vector<Detection>> out(dets.size());
  for (size_t i = 0; i < dets.size(); ++i) {
    out[i] = dets[i];
    std::stable_sort(out[i].begin(), out[i].end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (static_cast<int>(out[i].size()) > max_dets) out[i].resize(static_cast<size_t>(max_dets));
  }
  return out;
}

nlohmann::json report_body(const EvalReport& r) {
  return nlohmann::json{{"ap_per_iou", r.ap_per_iou},   {"per_class_ap", r.per_class_ap},
                        {"mean_ap", r.mean_ap},         {"ap50", r.ap50},
                        {"mean_ar100", r.mean_ar100},   {"duplicate_rate", r.duplicate_rate}};
}

}  // namespace

const std::vector<double>& iou_thresholds() {
  static const std::vector<double> kThresholds = [] {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.50 + 0.05 * i);
    return t;
  }();
  return kThresholds;
}

EvalReport evaluate(const std::vector<std::vector<Detection>>& dets_per_image,
                    const std::vector<std::vector<GtInstance>>& gts_per_image, int num_classes, int max_dets) {
  if (dets_per_image.size() != gts_per_image.size()) {
    throw std::invalid_argument("detections cover " + std::to_string(dets_per_image.size()) +
                                " images but ground truth has " + std::to_string(gts_per_image.size()));
  }
  if (num_classes < 1) throw std::invalid_argument("num_classes must be at least 1");
  if (max_dets < 1) throw std::invalid_argument("max_dets must be at least 1");

  const std::vector<std::vector<Detection>> dets = truncate_per_image(dets_per_image, max_dets);
  const std::vector<double>& thrs = iou_thresholds();

  EvalReport report;
  report.ap_per_iou.assign(thrs.size(), 0.0);
  report.per_class_ap.assign(static_cast<size_t>(num_classes), -1.0);

  std::vector<int> classes_with_gt;
  double ar_sum = 0;
  for (int c = 0; c < num_classes; ++c) {
    int gt_count = 0;
    for (const auto& img : gts_per_image) {
      for (const GtInstance& g : img) gt_count += g.cls == c ? 1 : 0;
    }
    if (gt_count == 0) continue;
    classes_with_gt.push_back(c);

    const std::vector<RankedDet> ranked = ranked_for_class(dets, c);
    double class_ap = 0;
    for (size_t t = 0; t < thrs.size(); ++t) {
      int matched = 0;
      const std::vector<char> tp = greedy_match(ranked, dets, gts_per_image, c, thrs[t], &matched);
      const double ap = ap_101(tp, gt_count);
      report.ap_per_iou[t] += ap;
      class_ap += ap;
      ar_sum += static_cast<double>(matched) / gt_count;
    }
    report.per_class_ap[static_cast<size_t>(c)] = class_ap / static_cast<double>(thrs.size());
  }

  if (!classes_with_gt.empty()) {
    for (double& v : report.ap_per_iou) v /= static_cast<double>(classes_with_gt.size());
    report.mean_ar100 = ar_sum / static_cast<double>(classes_with_gt.size() * thrs.size());
  }
  for (double v : report.ap_per_iou) report.mean_ap += v;
  report.mean_ap /= static_cast<double>(thrs.size());
  report.ap50 = report.ap_per_iou.front();
  report.duplicate_rate = duplicate_rate(dets_per_image, gts_per_image);
  return report;
}

double duplicate_rate(const std::vector<std::vector<Detection>>& dets_per_image,
                      const std::vector<std::vector<GtInstance>>& gts_per_image, double score_thr, double iou_thr) {
  if (dets_per_image.size() != gts_per_image.size()) {
    throw std::invalid_argument("detections and ground truth disagree on image count");
  }
  int total = 0, duplicated = 0;
  for (size_t i = 0; i < gts_per_image.size(); ++i) {
    for (const GtInstance& g : gts_per_image[i]) {
      ++total;
      int hits = 0;
      for (const Detection& d : dets_per_image[i]) {
        if (d.cls == g.cls && d.score >= score_thr && iou(d.box, g.box) >= iou_thr) ++hits;
      }
      duplicated += hits >= 2 ? 1 : 0;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(duplicated) / total;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j = report_body(report);
  j["timing"] = {{"forward_ms", report.forward_ms}, {"post_ms", report.post_ms}};
  return j.dump(2);
}

std::string report_signature(const EvalReport& report) { return report_body(report).dump(); }

void write_detections_jsonl(const std::string& path, const std::vector<std::vector<Detection>>& dets_per_image) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (size_t i = 0; i < dets_per_image.size(); ++i) {
    for (const Detection& d : dets_per_image[i]) {
      nlohmann::json j{{"image_id", i},
                       {"class", d.cls},
                       {"bbox", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                       {"score", d.score},
                       {"source", d.source == DetectionSource::kEndToEnd ? "end_to_end" : "one_to_many"}};
      out << j.dump() << "\n";
    }
  }
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace pssdet
