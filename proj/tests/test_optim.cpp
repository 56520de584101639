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

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "core/checkpoint.hpp"
#include "core/optim.hpp"
#include "core/rng.hpp"

using namespace pssdet;

namespace {

std::string temp_path(const char* name) { return std::string("/tmp/pssdet_test_") + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("sgd with momentum and weight decay matches the hand-computed update") {
  ParamSet params;
  params.add("p", Tensor::scalar(1.0));
  SgdConfig cfg{0.1, 0.9, 0.1};
  std::vector<Tensor> grads{Tensor::scalar(0.5)};

  // v = 0.5 + 0.1; p = 1 - 0.1 * 0.6
  sgd_step(params, grads, cfg);
  CHECK(params.at(0).value[0] == doctest::Approx(0.94).epsilon(1e-12));
  CHECK(params.at(0).velocity[0] == doctest::Approx(0.6).epsilon(1e-12));

  // v = 0.9 * 0.6 + 0.5 + 0.1 * 0.94 = 1.134; p = 0.94 - 0.1134
  sgd_step(params, grads, cfg);
  CHECK(params.at(0).value[0] == doctest::Approx(0.8266).epsilon(1e-12));
}

TEST_CASE("masked parameters are untouched, including velocity") {
  ParamSet params;
  params.add("a", Tensor::scalar(1.0));
  params.add("b", Tensor::scalar(1.0));
  std::vector<Tensor> grads{Tensor::scalar(1.0), Tensor::scalar(1.0)};
  std::vector<uint8_t> mask{1, 0};
  sgd_step(params, grads, SgdConfig{0.1, 0.9, 0.5}, &mask);
  CHECK(params.at(0).value[0] != 1.0);
  CHECK(params.at(1).value[0] == 1.0);
  CHECK(params.at(1).velocity[0] == 0.0);
}

TEST_CASE("zero gradient still applies weight decay to unmasked parameters") {
  ParamSet params;
  params.add("a", Tensor::scalar(2.0));
  std::vector<Tensor> grads{Tensor::scalar(0.0)};
  sgd_step(params, grads, SgdConfig{0.1, 0.0, 0.5});
  CHECK(params.at(0).value[0] == doctest::Approx(2.0 - 0.1 * (0.5 * 2.0)));
}

TEST_CASE("parameter set rejects misuse") {
  ParamSet params;
  params.add("w", Tensor({2, 2}));
  CHECK_THROWS_AS(params.add("w", Tensor({2, 2})), std::invalid_argument);
  CHECK(params.index_of("w") == 0);
  CHECK(params.index_of("nope") == -1);

  std::vector<Tensor> bad_count;
  CHECK_THROWS_AS(sgd_step(params, bad_count, SgdConfig{}), std::invalid_argument);
  std::vector<Tensor> bad_shape{Tensor({3})};
  CHECK_THROWS_AS(sgd_step(params, bad_shape, SgdConfig{}), std::invalid_argument);
}

TEST_CASE("checkpoint round-trips parameters and config") {
  const std::string path = temp_path("roundtrip.ckpt");
  ParamSet params;
  Rng rng(3);
  Tensor w({4, 3, 3, 3});
  for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-2, 2);
  params.add("backbone.w", w);
  params.add("head.bias", Tensor({4}, {0.25, -0.5, 1.0, 3.0}));
  const std::string config = "{\"seed\":7}";

  save_checkpoint(path, params, config);
  Checkpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.config_json == config);
  REQUIRE(ckpt.params.size() == 2);
  CHECK(ckpt.params[0].first == "backbone.w");
  CHECK(ckpt.params[1].second.shape() == std::vector<int>{4});
  // values survive the f32 narrowing exactly once
  for (int64_t i = 0; i < w.size(); ++i) {
    CHECK(ckpt.params[0].second[i] == static_cast<double>(static_cast<float>(w[i])));
  }

  ParamSet fresh;
  fresh.add("backbone.w", Tensor({4, 3, 3, 3}));
  fresh.add("head.bias", Tensor({4}));
  fresh.at(0).velocity[0] = 5.0;
  restore_params(fresh, ckpt);
  CHECK(fresh.at(0).value[3] == ckpt.params[0].second[3]);
  CHECK(fresh.at(0).velocity[0] == 0.0);

  std::remove(path.c_str());
}

TEST_CASE("saving twice produces identical bytes") {
  const std::string p1 = temp_path("det1.ckpt");
  const std::string p2 = temp_path("det2.ckpt");
  ParamSet params;
  params.add("x", Tensor({3}, {0.1, 0.2, 0.3}));
  save_checkpoint(p1, params, "{}");
  save_checkpoint(p2, params, "{}");
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("checkpoint loading rejects damaged files") {
  const std::string path = temp_path("damaged.ckpt");
  CHECK_THROWS_AS((void)load_checkpoint(temp_path("missing.ckpt")), std::runtime_error);

  {
    std::ofstream out(path, std::ios::binary);
    out << "JUNKJUNKJUNK";
  }
  CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);

  ParamSet params;
  params.add("x", Tensor({3}, {1, 2, 3}));
  save_checkpoint(path, params);
  std::string bytes = slurp(path);
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  }
  CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("restore rejects mismatched models") {
  const std::string path = temp_path("mismatch.ckpt");
  ParamSet params;
  params.add("x", Tensor({3}, {1, 2, 3}));
  save_checkpoint(path, params);
  Checkpoint ckpt = load_checkpoint(path);

  ParamSet wrong_shape;
  wrong_shape.add("x", Tensor({4}));
  CHECK_THROWS_AS(restore_params(wrong_shape, ckpt), std::runtime_error);

  ParamSet wrong_name;
  wrong_name.add("y", Tensor({3}));
  CHECK_THROWS_AS(restore_params(wrong_name, ckpt), std::runtime_error);

  ParamSet extra;
  extra.add("x", Tensor({3}));
  extra.add("z", Tensor({1}));
  CHECK_THROWS_AS(restore_params(extra, ckpt), std::runtime_error);
  std::remove(path.c_str());
}

}  // TEST_SUITE
