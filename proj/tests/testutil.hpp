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

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "core/assign.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"
#include "core/tensor.hpp"

namespace pssdet::testutil {

// Arbitrary boxes for assignment and matching tests; unlike the synthetic
// dataset these may overlap freely.
inline std::vector<GtInstance> random_instances(Rng& rng, int max_count, int num_classes = 3, double extent = 64.0,
                                                double min_side = 6.0) {
  std::vector<GtInstance> out;
  const int n = rng.next_int(max_count + 1);
  for (int k = 0; k < n; ++k) {
    const double w = rng.uniform(min_side, extent * 0.6);
    const double h = rng.uniform(min_side, extent * 0.6);
    const double x1 = rng.uniform(0.0, extent - w);
    const double y1 = rng.uniform(0.0, extent - h);
    out.push_back(GtInstance{Box{x1, y1, x1 + w, y1 + h}, rng.next_int(num_classes)});
  }
  return out;
}

// Snapshot shaped like real detector output: probabilities strictly inside
// (0, 1) and a decoded box around every anchor point, so each anchor's box
// overlaps any instance that contains the point.
inline OutputSnapshot random_snapshot(Rng& rng, const AnchorLayout& layout, int num_classes = 3) {
  OutputSnapshot s;
  s.num_classes = num_classes;
  const int total = layout.total();
  s.cls_prob.resize(static_cast<size_t>(total) * num_classes);
  for (auto& v : s.cls_prob) v = rng.uniform(0.01, 0.99);
  s.ctr_prob.resize(static_cast<size_t>(total));
  for (auto& v : s.ctr_prob) v = rng.uniform(0.01, 0.99);
  s.pss_prob.resize(static_cast<size_t>(total));
  for (auto& v : s.pss_prob) v = rng.uniform(0.01, 0.99);
  s.boxes.resize(static_cast<size_t>(total));
  for (int a = 0; a < total; ++a) {
    const AnchorPoint p = layout.point(a);
    s.boxes[static_cast<size_t>(a)] = Box{p.x - rng.uniform(0.5, 20.0), p.y - rng.uniform(0.5, 20.0),
                                          p.x + rng.uniform(0.5, 20.0), p.y + rng.uniform(0.5, 20.0)};
  }
  return s;
}

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Relative error with an absolute floor of 1, so values near zero are judged
// on absolute error.
inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1.0});
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int input = -1;
  int64_t coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central finite differences against backward() on every coordinate of every
// input, or on max_coords sampled coordinates per input when positive. The
// builder must construct a scalar loss from leaves created on the given tape.
inline GradCheckResult check_gradients(const std::vector<Tensor>& inputs,
                                       const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                                       double h = 1e-5, int64_t max_coords = 0, uint64_t sample_seed = 7) {
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(xs.size());
    for (const Tensor& t : xs) leaves.push_back(tape.leaf(t));
    return tape.value(build(tape, leaves))[0];
  };

  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  tape.backward(build(tape, leaves));

  GradCheckResult r;
  std::vector<Tensor> xs = inputs;
  Rng pick(sample_seed);
  for (size_t k = 0; k < xs.size(); ++k) {
    const Tensor& g = tape.grad(leaves[k]);
    const int64_t n = xs[k].size();
    std::vector<int64_t> coords;
    if (max_coords > 0 && n > max_coords) {
      coords.reserve(static_cast<size_t>(max_coords));
      for (int64_t c = 0; c < max_coords; ++c) coords.push_back(static_cast<int64_t>(pick.next_u64() % static_cast<uint64_t>(n)));
    } else {
      coords.resize(static_cast<size_t>(n));
      std::iota(coords.begin(), coords.end(), int64_t{0});
    }
    for (int64_t i : coords) {
      const double x0 = xs[k][i];
      xs[k][i] = x0 + h;
      const double fp = eval(xs);
      xs[k][i] = x0 - h;
      const double fm = eval(xs);
      xs[k][i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = g[i];
      const double e = rel_err(analytic, numeric);
      ++r.checked;
      if (e > r.max_rel_err) {
        r.max_rel_err = e;
        r.input = static_cast<int>(k);
        r.coord = i;
        r.analytic = analytic;
        r.numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace pssdet::testutil
