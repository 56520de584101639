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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "core/eval.hpp"
#include "core/inference.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace pssdet;
namespace fs = std::filesystem;

namespace {

OutputSnapshot tiny_snapshot(int anchors, int classes, double fill = 0.001) {
  OutputSnapshot snap;
  snap.num_classes = classes;
  snap.cls_prob.assign(static_cast<size_t>(anchors) * classes, fill);
  snap.ctr_prob.assign(static_cast<size_t>(anchors), fill);
  snap.pss_prob.assign(static_cast<size_t>(anchors), fill);
  for (int a = 0; a < anchors; ++a) snap.boxes.push_back(Box{4.0 + a, 4.0, 14.0 + a, 14.0});
  return snap;
}

Detection det(int cls, Box box, double score) { return Detection{cls, box, score, DetectionSource::kEndToEnd}; }

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("end-to-end decode emits the single spike with the product score") {
  OutputSnapshot snap = tiny_snapshot(3, 2);
  snap.cls_prob[1 * 2 + 0] = 0.9;
  snap.pss_prob[1] = 0.8;
  snap.ctr_prob[1] = 0.9;
  std::vector<Detection> dets = decode_end_to_end(snap, 64, 64, InferenceConfig{});
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].cls == 0);
  CHECK(dets[0].score == doctest::Approx(0.9 * 0.8 * 0.9).epsilon(1e-12));
  CHECK(dets[0].box.x1 == 5.0);
  CHECK(dets[0].source == DetectionSource::kEndToEnd);

  // near-zero probabilities everywhere produce nothing above any floor
  CHECK(decode_end_to_end(tiny_snapshot(3, 2), 64, 64, InferenceConfig{}).empty());
}

TEST_CASE("end-to-end decode never suppresses overlapping boxes") {
  OutputSnapshot snap = tiny_snapshot(5, 1);
  for (int a = 0; a < 5; ++a) {
    snap.boxes[static_cast<size_t>(a)] = Box{4, 4, 14, 14};  // identical boxes
    snap.cls_prob[static_cast<size_t>(a)] = 0.9;
    snap.pss_prob[static_cast<size_t>(a)] = 0.9;
    snap.ctr_prob[static_cast<size_t>(a)] = 0.9;
  }
  CHECK(decode_end_to_end(snap, 64, 64, InferenceConfig{}).size() == 5);
  InferenceConfig capped;
  capped.top_k = 3;
  CHECK(decode_end_to_end(snap, 64, 64, capped).size() == 3);
}

TEST_CASE("decode output matches an independent reconstruction") {
  Rng rng(51);
  AnchorLayout layout(64, 64, {4, 8, 16});
  for (int trial = 0; trial < 20; ++trial) {
    OutputSnapshot snap = testutil::random_snapshot(rng, layout);
    InferenceConfig cfg;
    cfg.score_floor = 0.05;
    cfg.top_k = 40;

    struct Want {
      double score;
      int anchor;
      int cls;
    };
    std::vector<Want> want;
    for (int a = 0; a < layout.total(); ++a) {
      for (int c = 0; c < snap.num_classes; ++c) {
        const double s = snap.pss_prob[static_cast<size_t>(a)] * snap.ctr_prob[static_cast<size_t>(a)] * snap.cls_at(a, c);
        if (s >= cfg.score_floor) want.push_back(Want{s, a, c});
      }
    }
    std::sort(want.begin(), want.end(), [](const Want& a, const Want& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.anchor != b.anchor) return a.anchor < b.anchor;
      return a.cls < b.cls;
    });
    if (want.size() > 40) want.resize(40);

    std::vector<Detection> got = decode_end_to_end(snap, 64, 64, cfg);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
      REQUIRE(got[i].score == want[i].score);
      CHECK(got[i].cls == want[i].cls);
      CHECK(got[i].box.x1 >= 0.0);
      CHECK(got[i].box.x2 <= 64.0);
      CHECK(got[i].box.y2 <= 64.0);
      const int a = want[i].anchor;
      CHECK(got[i].score <= snap.pss_prob[static_cast<size_t>(a)]);
      CHECK(got[i].score <= snap.ctr_prob[static_cast<size_t>(a)]);
      CHECK(got[i].score <= snap.cls_at(a, want[i].cls));
    }
  }
}

TEST_CASE("one-to-many decode keeps duplicates only without nms") {
  OutputSnapshot snap = tiny_snapshot(2, 1);
  snap.boxes[0] = Box{4, 4, 14, 14};
  snap.boxes[1] = Box{4, 4, 14, 14};
  snap.cls_prob[0] = 0.9;
  snap.cls_prob[1] = 0.8;
  snap.ctr_prob[0] = snap.ctr_prob[1] = 1.0;
  // the selector factor must not leak into this path
  snap.pss_prob[0] = snap.pss_prob[1] = 1e-9;

  std::vector<Detection> raw = decode_one_to_many(snap, 64, 64, InferenceConfig{}, false);
  REQUIRE(raw.size() == 2);
  CHECK(raw[0].score == doctest::Approx(0.9));
  CHECK(raw[0].source == DetectionSource::kOneToMany);
  std::vector<Detection> cleaned = decode_one_to_many(snap, 64, 64, InferenceConfig{}, true, 0.6);
  REQUIRE(cleaned.size() == 1);
  CHECK(cleaned[0].score == doctest::Approx(0.9));
}

TEST_CASE("nms hand traces") {
  const Box a{0, 0, 10, 10};
  std::vector<Detection> one{det(0, a, 0.9)};
  CHECK(nms(one, 0.5).size() == 1);

  std::vector<Detection> twins{det(0, a, 0.9), det(0, a, 0.8)};
  std::vector<Detection> kept = nms(twins, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);

  // B overlaps A at IoU 0.6 and dies, C at 0.2 and survives
  std::vector<Detection> three{det(0, a, 0.9), det(0, Box{0, 0, 10, 6}, 0.8), det(0, Box{0, 0, 10, 2}, 0.7)};
  kept = nms(three, 0.5);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].score == 0.9);
  CHECK(kept[1].score == 0.7);

  // different classes never suppress each other
  std::vector<Detection> cross{det(0, a, 0.9), det(1, a, 0.8)};
  CHECK(nms(cross, 0.5).size() == 2);

  // exactly at the threshold means kept
  std::vector<Detection> edge{det(0, a, 0.9), det(0, Box{0, 0, 10, 5}, 0.8)};
  CHECK(nms(edge, 0.5).size() == 2);

  CHECK_THROWS_AS((void)nms(one, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)nms(one, 1.0), std::invalid_argument);
}

TEST_CASE("nms is idempotent on random inputs") {
  Rng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Detection> dets;
    const int n = 1 + rng.next_int(12);
    for (int i = 0; i < n; ++i) {
      const double x = rng.uniform(0, 40), y = rng.uniform(0, 40);
      dets.push_back(det(rng.next_int(2), Box{x, y, x + rng.uniform(4, 20), y + rng.uniform(4, 20)},
                         rng.uniform(0.05, 1.0)));
    }
    std::vector<Detection> once = nms(dets, 0.5);
    std::vector<Detection> twice = nms(once, 0.5);
    REQUIRE(once.size() == twice.size());
    for (size_t i = 0; i < once.size(); ++i) {
      CHECK(once[i].score == twice[i].score);
      CHECK(once[i].box.x1 == twice[i].box.x1);
    }
    // survivors come out in descending score order
    for (size_t i = 1; i < once.size(); ++i) CHECK(once[i - 1].score >= once[i].score);
  }
}

TEST_CASE("evaluate reproduces the duplicate-hit hand trace") {
  std::vector<std::vector<GtInstance>> gts{{GtInstance{Box{0, 0, 10, 10}, 0}, GtInstance{Box{20, 20, 30, 30}, 0}}};
  std::vector<std::vector<Detection>> dets{{det(0, Box{0, 0, 10, 10}, 0.9), det(0, Box{0, 0, 10, 9}, 0.8),
                                            det(0, Box{40, 40, 50, 50}, 0.7)}};
  EvalReport r = evaluate(dets, gts, 1);
  CHECK(r.ap50 == doctest::Approx(51.0 / 101.0).epsilon(1e-12));
  CHECK(r.mean_ap == doctest::Approx(51.0 / 101.0).epsilon(1e-12));
  CHECK(r.mean_ar100 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.duplicate_rate == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("perfect detections score a clean sweep") {
  std::vector<std::vector<GtInstance>> gts{{GtInstance{Box{0, 0, 10, 10}, 0}, GtInstance{Box{20, 20, 34, 34}, 2}},
                                           {GtInstance{Box{5, 5, 19, 19}, 1}}};
  std::vector<std::vector<Detection>> dets{{det(0, Box{0, 0, 10, 10}, 1.0), det(2, Box{20, 20, 34, 34}, 1.0)},
                                           {det(1, Box{5, 5, 19, 19}, 1.0)}};
  EvalReport r = evaluate(dets, gts, 3);
  CHECK(r.mean_ap == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.mean_ar100 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.duplicate_rate == 0.0);
  for (double v : r.per_class_ap) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  EvalReport empty = evaluate({{}, {}}, gts, 3);
  CHECK(empty.mean_ap == 0.0);
  CHECK(empty.mean_ar100 == 0.0);
}

TEST_CASE("classes without ground truth are excluded from the averages") {
  std::vector<std::vector<GtInstance>> gts{{GtInstance{Box{0, 0, 10, 10}, 0}}};
  std::vector<std::vector<Detection>> dets{{det(0, Box{0, 0, 10, 10}, 0.9), det(1, Box{30, 30, 40, 40}, 0.8)}};
  EvalReport r = evaluate(dets, gts, 2);
  CHECK(r.mean_ap == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.per_class_ap[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.per_class_ap[1] == -1.0);
}

TEST_CASE("max_dets caps each image before matching") {
  std::vector<std::vector<GtInstance>> gts{{GtInstance{Box{0, 0, 10, 10}, 0}}};
  std::vector<Detection> many;
  for (int i = 0; i < 149; ++i) many.push_back(det(0, Box{30, 30, 40, 40}, 0.9 - i * 1e-4));
  many.push_back(det(0, Box{0, 0, 10, 10}, 0.1));  // the only true hit, ranked last
  EvalReport capped = evaluate({many}, gts, 1);
  CHECK(capped.mean_ap == 0.0);
  CHECK(capped.mean_ar100 == 0.0);
  EvalReport wide = evaluate({many}, gts, 1, 200);
  CHECK(wide.mean_ap == doctest::Approx(1.0 / 150.0).epsilon(1e-12));
  CHECK(wide.mean_ar100 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("evaluate matches the brute-force reference on random cases") {
  Rng rng(59);
  for (int trial = 0; trial < 50; ++trial) {
    const int images = 1 + rng.next_int(3);
    std::vector<std::vector<GtInstance>> gts(static_cast<size_t>(images));
    std::vector<std::vector<Detection>> dets(static_cast<size_t>(images));
    for (int i = 0; i < images; ++i) {
      const int ngt = rng.next_int(5);
      for (int g = 0; g < ngt; ++g) {
        const double x = rng.uniform(0, 40), y = rng.uniform(0, 40);
        const GtInstance gt{Box{x, y, x + rng.uniform(5, 20), y + rng.uniform(5, 20)}, rng.next_int(3)};
        gts[static_cast<size_t>(i)].push_back(gt);
        // a few detections hover near this box, sometimes with the wrong class
        const int nd = rng.next_int(3);
        for (int d = 0; d < nd; ++d) {
          Box jit{gt.box.x1 + rng.uniform(-3, 3), gt.box.y1 + rng.uniform(-3, 3), gt.box.x2 + rng.uniform(-3, 3),
                  gt.box.y2 + rng.uniform(-3, 3)};
          if (!jit.valid()) continue;
          dets[static_cast<size_t>(i)].push_back(
              Detection{rng.next_bool() ? gt.cls : rng.next_int(3), jit, rng.uniform(0.05, 1.0)});
        }
      }
      const int noise = rng.next_int(4);
      for (int d = 0; d < noise; ++d) {
        const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
        dets[static_cast<size_t>(i)].push_back(
            Detection{rng.next_int(3), Box{x, y, x + rng.uniform(4, 12), y + rng.uniform(4, 12)},
                      rng.uniform(0.05, 1.0)});
      }
    }

    EvalReport r = evaluate(dets, gts, 3);
    const std::vector<double>& thrs = iou_thresholds();
    for (size_t t = 0; t < thrs.size(); ++t) {
      double sum = 0;
      int classes = 0;
      for (int c = 0; c < 3; ++c) {
        const double ap = oracle::ap_ref(dets, gts, c, thrs[t]);
        if (ap < 0) continue;
        sum += ap;
        ++classes;
      }
      const double want = classes > 0 ? sum / classes : 0.0;
      REQUIRE(r.ap_per_iou[t] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("duplicate rate counts multiply-hit instances") {
  std::vector<std::vector<GtInstance>> gts{
      {GtInstance{Box{0, 0, 10, 10}, 0}, GtInstance{Box{20, 20, 30, 30}, 1}, GtInstance{Box{40, 40, 50, 50}, 2}}};

  std::vector<std::vector<Detection>> unique{{det(0, Box{0, 0, 10, 10}, 0.9), det(1, Box{20, 20, 30, 30}, 0.9)}};
  CHECK(duplicate_rate(unique, gts) == 0.0);

  std::vector<std::vector<Detection>> twice{
      {det(0, Box{0, 0, 10, 10}, 0.9), det(0, Box{0, 0, 10, 9}, 0.8), det(1, Box{20, 20, 30, 30}, 0.9),
       det(1, Box{20, 20, 30, 29}, 0.7), det(2, Box{40, 40, 50, 50}, 0.9), det(2, Box{40, 40, 50, 49}, 0.6)}};
  CHECK(duplicate_rate(twice, gts) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<std::vector<Detection>> mixed{
      {det(0, Box{0, 0, 10, 10}, 0.9), det(0, Box{0, 0, 10, 9}, 0.8), det(1, Box{20, 20, 30, 30}, 0.9)}};
  CHECK(duplicate_rate(mixed, gts) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // sub-threshold scores and wrong classes never count
  std::vector<std::vector<Detection>> weak{{det(0, Box{0, 0, 10, 10}, 0.4), det(0, Box{0, 0, 10, 9}, 0.9),
                                            det(1, Box{0, 0, 10, 10}, 0.9)}};
  CHECK(duplicate_rate(weak, gts) == 0.0);
}

TEST_CASE("heatmap export writes scaled pgm maps") {
  AnchorLayout layout(64, 64, {4, 8, 16});
  OutputSnapshot snap;
  snap.num_classes = 2;
  snap.cls_prob.assign(static_cast<size_t>(layout.total()) * 2, 0.25);
  snap.ctr_prob.assign(static_cast<size_t>(layout.total()), 0.5);
  snap.pss_prob.assign(static_cast<size_t>(layout.total()), 0.5);
  snap.boxes.assign(static_cast<size_t>(layout.total()), Box{0, 0, 4, 4});

  const fs::path dir = fs::temp_directory_path() / "pssdet_heatmaps";
  fs::create_directories(dir);

  const std::string flat = (dir / "flat.pgm").string();
  export_heatmap(snap, layout, 1, HeatKind::kCls, flat);
  std::ifstream in(flat, std::ios::binary);
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string header = "P5\n8 8\n255\n";
  REQUIRE(bytes.size() == header.size() + 64);
  CHECK(std::equal(header.begin(), header.end(), bytes.begin()));
  for (size_t i = header.size(); i < bytes.size(); ++i) CHECK(static_cast<uint8_t>(bytes[i]) == 128);

  // one hot cell turns bright white on a black background
  snap.pss_prob[static_cast<size_t>(layout.level(1).offset + 3)] = 0.9;
  const std::string spike = (dir / "spike.pgm").string();
  export_heatmap(snap, layout, 1, HeatKind::kProduct, spike);
  std::ifstream in2(spike, std::ios::binary);
  std::vector<char> bytes2{std::istreambuf_iterator<char>(in2), std::istreambuf_iterator<char>()};
  REQUIRE(bytes2.size() == header.size() + 64);
  for (size_t i = 0; i < 64; ++i) {
    CHECK(static_cast<uint8_t>(bytes2[header.size() + i]) == (i == 3 ? 255 : 0));
  }

  CHECK_THROWS_AS(export_heatmap(snap, layout, 3, HeatKind::kCls, (dir / "x.pgm").string()), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("report json separates timings from the signature") {
  EvalReport a;
  a.ap_per_iou = {0.5, 0.4};
  a.per_class_ap = {0.45};
  a.mean_ap = 0.45;
  a.ap50 = 0.5;
  a.mean_ar100 = 0.6;
  a.duplicate_rate = 0.01;
  a.forward_ms = 12.5;
  EvalReport b = a;
  b.forward_ms = 99.0;
  b.post_ms = 3.0;
  CHECK(report_signature(a) == report_signature(b));
  CHECK(report_to_json(a) != report_to_json(b));
  CHECK(report_to_json(a).find("\"timing\"") != std::string::npos);
}

TEST_CASE("detections dump one json object per line") {
  const fs::path dir = fs::temp_directory_path() / "pssdet_dets";
  fs::create_directories(dir);
  const std::string path = (dir / "dets.jsonl").string();
  std::vector<std::vector<Detection>> dets{{det(1, Box{1, 2, 3, 4}, 0.75)},
                                           {Detection{0, Box{0, 0, 5, 5}, 0.5, DetectionSource::kOneToMany}}};
  write_detections_jsonl(path, dets);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.find("\"bbox\"") != std::string::npos);
  }
  CHECK(lines == 2);
  fs::remove_all(dir);
}

}  // TEST_SUITE
