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
#include <chrono>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "core/checkpoint.hpp"
#include "core/model.hpp"
#include "testutil.hpp"

using namespace pssdet;
using testutil::random_tensor;

namespace {

int conv_params(int out_ch, int in_ch, int k) { return out_ch * in_ch * k * k + out_ch; }

Tensor test_image(uint64_t seed = 11) {
  Rng rng(seed);
  return random_tensor(rng, {3, 64, 64}, 0.0, 1.0);
}

bool all_zero(const Tensor& t) {
  for (int64_t i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("same seed builds bitwise-identical parameters") {
  Detector a(DetectorConfig{}, 7);
  Detector b(DetectorConfig{}, 7);
  REQUIRE(a.params().size() == b.params().size());
  for (int i = 0; i < a.params().size(); ++i) {
    const Param& pa = a.params().at(i);
    const Param& pb = b.params().at(i);
    CHECK(pa.name == pb.name);
    REQUIRE(pa.value.size() == pb.value.size());
    for (int64_t k = 0; k < pa.value.size(); ++k) REQUIRE(pa.value[k] == pb.value[k]);
  }

  Detector c(DetectorConfig{}, 8);
  bool any_diff = false;
  for (int64_t k = 0; k < a.params().at(0).value.size(); ++k) {
    any_diff = any_diff || a.params().at(0).value[k] != c.params().at(0).value[k];
  }
  CHECK(any_diff);
}

TEST_CASE("parameter count matches the layer arithmetic") {
  DetectorConfig cfg;
  Detector det(cfg, 1);
  int expected = conv_params(16, 3, 3) + conv_params(32, 16, 3) + conv_params(64, 32, 3) + conv_params(64, 64, 3);
  expected += conv_params(cfg.tower_channels, 32, 1) + 2 * conv_params(cfg.tower_channels, 64, 1);
  expected += 2 * cfg.tower_depth * conv_params(cfg.tower_channels, cfg.tower_channels, 3);
  expected += conv_params(cfg.num_classes, cfg.tower_channels, 3) + conv_params(4, cfg.tower_channels, 3) +
              conv_params(1, cfg.tower_channels, 3) + 3;
  expected += conv_params(cfg.pss_channels, cfg.tower_channels, 3);
  for (int d = 1; d < cfg.pss_depth; ++d) expected += conv_params(cfg.pss_channels, cfg.pss_channels, 3);
  expected += conv_params(1, cfg.pss_channels, 3);
  CHECK(det.param_count() == expected);

  const std::string text = det.describe();
  CHECK(text.find("total parameters: " + std::to_string(expected)) != std::string::npos);
  CHECK(text.find("backbone.block1.w") != std::string::npos);
}

TEST_CASE("config validation names the offending field") {
  DetectorConfig cfg;
  cfg.pss_depth = 0;
  CHECK_THROWS_WITH_AS((void)Detector(cfg, 1), "pss_depth must be at least 1", std::invalid_argument);
  cfg = DetectorConfig{};
  cfg.strides = {8, 4, 16};
  CHECK_THROWS_AS((void)Detector(cfg, 1), std::invalid_argument);
}

TEST_CASE("config json round trip and unknown key rejection") {
  DetectorConfig cfg;
  cfg.num_classes = 5;
  cfg.pss_branch = PssBranch::kClassification;
  cfg.use_stop_grad = false;
  DetectorConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.num_classes == 5);
  CHECK(back.pss_branch == PssBranch::kClassification);
  CHECK(back.use_stop_grad == false);
  CHECK(back.tower_channels == cfg.tower_channels);

  CHECK_THROWS_WITH_AS((void)config_from_json(R"({"tower_chanels": 32})"),
                       "unknown detector config key: tower_chanels", std::invalid_argument);
  CHECK_THROWS_AS((void)config_from_json(R"({"pss_branch": "both"})"), std::invalid_argument);
}

TEST_CASE("forward produces one flat row per anchor cell") {
  Detector det(DetectorConfig{}, 3);
  Tape tape;
  FlatOutputs out = det.forward(tape, test_image());

  REQUIRE(out.layout.num_levels() == 3);
  CHECK(out.layout.level(0).h == 16);
  CHECK(out.layout.level(1).h == 8);
  CHECK(out.layout.level(2).h == 4);
  REQUIRE(out.layout.total() == 336);

  CHECK(out.cls.shape() == std::vector<int>{336, 3});
  CHECK(out.ctr.shape() == std::vector<int>{336});
  CHECK(out.pss.shape() == std::vector<int>{336});
  CHECK(out.reg.l.shape() == std::vector<int>{336});
  for (int64_t i = 0; i < 336; ++i) {
    CHECK(tape.value(out.reg.l)[i] > 0.0);
    CHECK(tape.value(out.reg.b)[i] > 0.0);
  }
  CHECK(tape.value(out.cls).all_finite());

  CHECK_THROWS_AS((void)det.forward(tape, Tensor({3, 60, 64})), std::invalid_argument);
  CHECK_THROWS_AS((void)det.forward(tape, Tensor({1, 64, 64})), std::invalid_argument);
}

TEST_CASE("selector bias keeps initial selector probability near the prior") {
  Detector det(DetectorConfig{}, 5);
  Tape tape;
  FlatOutputs out = det.forward(tape, test_image());
  OutputSnapshot snap = det.snapshot(tape, out);
  double mean_pss = 0, mean_cls = 0;
  for (double v : snap.pss_prob) mean_pss += v;
  mean_pss /= static_cast<double>(snap.pss_prob.size());
  for (double v : snap.cls_prob) mean_cls += v;
  mean_cls /= static_cast<double>(snap.cls_prob.size());
  MESSAGE("mean selector prob ", mean_pss, ", mean class prob ", mean_cls);
  CHECK(mean_pss > 0.0033);
  CHECK(mean_pss < 0.03);
  CHECK(mean_cls > 0.0033);
  CHECK(mean_cls < 0.03);
}

TEST_CASE("snapshot mirrors the tape values through the sigmoid") {
  Detector det(DetectorConfig{}, 9);
  Tape tape;
  FlatOutputs out = det.forward(tape, test_image(12));
  OutputSnapshot snap = det.snapshot(tape, out);
  const Tensor& cls = tape.value(out.cls);
  for (int a = 0; a < 336; a += 37) {
    for (int c = 0; c < 3; ++c) {
      const double logit = cls[static_cast<int64_t>(a) * 3 + c];
      CHECK(snap.cls_at(a, c) == doctest::Approx(1.0 / (1.0 + std::exp(-logit))).epsilon(1e-12));
    }
    // decoded boxes keep their anchor point strictly inside
    const AnchorPoint p = out.layout.point(a);
    CHECK(snap.boxes[static_cast<size_t>(a)].contains(p.x, p.y));
  }
}

TEST_CASE("stop gradient isolates the selector head from the rest") {
  Tensor img = test_image(21);

  Detector det(DetectorConfig{}, 13);
  Tape tape;
  FlatOutputs out = det.forward(tape, img);
  tape.backward(tape.sum(out.pss));
  bool pss_nonzero = false;
  for (int i = 0; i < det.params().size(); ++i) {
    const Tensor& g = tape.grad(out.param_vars[static_cast<size_t>(i)]);
    if (Detector::is_pss_param(det.params().at(i).name)) {
      pss_nonzero = pss_nonzero || !all_zero(g);
    } else {
      CHECK(all_zero(g));
    }
  }
  CHECK(pss_nonzero);

  DetectorConfig open;
  open.use_stop_grad = false;
  Detector det2(open, 13);
  Tape tape2;
  FlatOutputs out2 = det2.forward(tape2, img);
  tape2.backward(tape2.sum(out2.pss));
  bool reg_tower_nonzero = false;
  for (int i = 0; i < det2.params().size(); ++i) {
    if (det2.params().at(i).name.rfind("tower.reg.", 0) == 0) {
      reg_tower_nonzero = reg_tower_nonzero || !all_zero(tape2.grad(out2.param_vars[static_cast<size_t>(i)]));
    }
  }
  CHECK(reg_tower_nonzero);
}

TEST_CASE("selector on the classification branch feeds from the other tower") {
  DetectorConfig cfg;
  cfg.pss_branch = PssBranch::kClassification;
  cfg.use_stop_grad = false;
  Detector det(cfg, 13);
  Tape tape;
  FlatOutputs out = det.forward(tape, test_image(22));
  tape.backward(tape.sum(out.pss));
  bool cls_tower = false;
  for (int i = 0; i < det.params().size(); ++i) {
    const std::string& name = det.params().at(i).name;
    const Tensor& g = tape.grad(out.param_vars[static_cast<size_t>(i)]);
    if (name.rfind("tower.cls.", 0) == 0) cls_tower = cls_tower || !all_zero(g);
    if (name.rfind("tower.reg.", 0) == 0) CHECK(all_zero(g));
  }
  CHECK(cls_tower);
}

TEST_CASE("zeroed weights leave only the biases") {
  Detector det(DetectorConfig{}, 17);
  for (Param& p : det.params()) {
    if (p.name.size() > 2 && p.name.compare(p.name.size() - 2, 2, ".w") == 0) {
      for (int64_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.0;
    }
  }
  Tape tape;
  FlatOutputs out = det.forward(tape, test_image(2));
  const double prior = -std::log(99.0);
  for (int64_t i = 0; i < tape.value(out.cls).size(); ++i) {
    CHECK(tape.value(out.cls)[i] == doctest::Approx(prior).epsilon(1e-14));
  }
  for (int64_t i = 0; i < 336; ++i) {
    CHECK(tape.value(out.ctr)[i] == 0.0);
    CHECK(tape.value(out.reg.l)[i] == 1.0);
    CHECK(tape.value(out.pss)[i] == doctest::Approx(prior).epsilon(1e-14));
  }
}

TEST_CASE("discarding the selector head leaves the rest bitwise identical") {
  DetectorConfig with;
  DetectorConfig without;
  without.use_pss = false;
  Detector a(with, 19);
  Detector b(without, 19);

  for (const Param& pb : b.params()) {
    const int ia = a.params().index_of(pb.name);
    REQUIRE(ia >= 0);
    const Tensor& va = a.params().at(ia).value;
    REQUIRE(va.size() == pb.value.size());
    for (int64_t k = 0; k < va.size(); ++k) REQUIRE(va[k] == pb.value[k]);
  }

  Tensor img = test_image(30);
  Tape ta, tb;
  FlatOutputs oa = a.forward(ta, img);
  FlatOutputs ob = b.forward(tb, img);
  CHECK_FALSE(ob.pss.valid());
  for (int64_t i = 0; i < ta.value(oa.cls).size(); ++i) REQUIRE(ta.value(oa.cls)[i] == tb.value(ob.cls)[i]);
  for (int64_t i = 0; i < 336; ++i) {
    REQUIRE(ta.value(oa.ctr)[i] == tb.value(ob.ctr)[i]);
    REQUIRE(ta.value(oa.reg.l)[i] == tb.value(ob.reg.l)[i]);
    REQUIRE(ta.value(oa.reg.r)[i] == tb.value(ob.reg.r)[i]);
  }
  OutputSnapshot snap = b.snapshot(tb, ob);
  for (double v : snap.pss_prob) CHECK(v == 1.0);
}

TEST_CASE("disabling centerness pins its factor to one") {
  DetectorConfig cfg;
  cfg.use_centerness = false;
  Detector det(cfg, 23);
  CHECK(det.params().index_of("head.ctr.w") == -1);
  Tape tape;
  FlatOutputs out = det.forward(tape, test_image(31));
  OutputSnapshot snap = det.snapshot(tape, out);
  for (double v : snap.ctr_prob) CHECK(v == 1.0);
}

TEST_CASE("update masks split the selector from everything else") {
  Detector det(DetectorConfig{}, 29);
  std::vector<uint8_t> pss_only = det.pss_mask(true);
  std::vector<uint8_t> rest_only = det.pss_mask(false);
  int pss_params = 0;
  for (int i = 0; i < det.params().size(); ++i) {
    const bool is_pss = Detector::is_pss_param(det.params().at(i).name);
    CHECK(pss_only[static_cast<size_t>(i)] == (is_pss ? 1 : 0));
    CHECK(rest_only[static_cast<size_t>(i)] == (is_pss ? 0 : 1));
    pss_params += is_pss ? 1 : 0;
  }
  CHECK(pss_params == 6);  // two tower convs plus the output conv, weight and bias each
}

TEST_CASE("checkpoint round trip restores config and float-narrowed values") {
  DetectorConfig cfg;
  cfg.num_classes = 2;
  cfg.use_stop_grad = false;
  Detector det(cfg, 31);
  const auto path = (std::filesystem::temp_directory_path() / "pssdet_model_roundtrip.ckpt").string();
  det.save(path);

  // header plus one record per parameter, f32 payload
  uintmax_t expected = 4 + 4 + 4 + 4 + config_to_json(cfg).size();
  for (const Param& p : det.params()) {
    expected += 2 + p.name.size() + 1 + 4 * static_cast<uintmax_t>(p.value.rank()) + 4 * static_cast<uintmax_t>(p.value.size());
  }
  CHECK(std::filesystem::file_size(path) == expected);

  Detector back = Detector::load(path);
  CHECK(back.config().num_classes == 2);
  CHECK(back.config().use_stop_grad == false);
  CHECK(back.describe() == det.describe());
  for (int i = 0; i < det.params().size(); ++i) {
    const Tensor& orig = det.params().at(i).value;
    const Tensor& got = back.params().at(i).value;
    for (int64_t k = 0; k < orig.size(); ++k) REQUIRE(got[k] == static_cast<double>(static_cast<float>(orig[k])));
  }
  std::filesystem::remove(path);
}

TEST_CASE("selector head forward overhead stays modest") {
  DetectorConfig with;
  DetectorConfig without;
  without.use_pss = false;
  Detector a(with, 37);
  Detector b(without, 37);
  Tensor img = test_image(40);

  auto run = [&](const Detector& d) {
    Tape tape;
    FlatOutputs out = d.forward(tape, img);
    return tape.value(out.cls)[0];
  };
  volatile double sink = 0;
  for (int i = 0; i < 3; ++i) sink = sink + run(a) + run(b);

  std::vector<double> ta, tb;
  for (int i = 0; i < 15; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    sink = sink + run(a);
    auto t1 = std::chrono::steady_clock::now();
    sink = sink + run(b);
    auto t2 = std::chrono::steady_clock::now();
    ta.push_back(std::chrono::duration<double>(t1 - t0).count());
    tb.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  const double ratio = ta[ta.size() / 2] / tb[tb.size() / 2];
  MESSAGE("forward with selector / without: ", ratio, " (", ta[ta.size() / 2] * 1e3, " ms vs ",
          tb[tb.size() / 2] * 1e3, " ms)");
  CHECK(ratio <= 1.15);
}

}  // TEST_SUITE
