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

// Deliberately naive reference implementations. Each one trades speed for
// being obviously correct, and exists only to cross-check the real code.

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "core/assign.hpp"
#include "core/inference.hpp"
#include "core/tensor.hpp"

namespace pssdet::oracle {

// Exhaustive search over injective column-to-row maps; exponential, only for
// tiny matrices.
inline double best_assignment_total_ref(const Mat& q) {
  std::vector<char> used(static_cast<size_t>(q.rows), 0);
  double best = -1e300;
  std::vector<double> stack;
  auto rec = [&](auto&& self, int j, double acc) -> void {
    if (j == q.cols) {
      if (acc > best) best = acc;
      return;
    }
    for (int i = 0; i < q.rows; ++i) {
      if (used[static_cast<size_t>(i)]) continue;
      used[static_cast<size_t>(i)] = 1;
      self(self, j + 1, acc + q(i, j));
      used[static_cast<size_t>(i)] = 0;
    }
  };
  rec(rec, 0, 0.0);
  return best;
}

// Direct seven-loop convolution, NCHW input and OIKK weight.
inline Tensor conv2d_ref(const Tensor& in, const Tensor& w, const Tensor& b, int stride, int padding) {
  const int N = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int Co = w.dim(0), K = w.dim(2);
  const int Ho = (H + 2 * padding - K) / stride + 1;
  const int Wo = (W + 2 * padding - K) / stride + 1;
  Tensor out({N, Co, Ho, Wo});
  auto iat = [&](int n, int c, int y, int x) { return in[((static_cast<int64_t>(n) * Ci + c) * H + y) * W + x]; };
  auto wat = [&](int o, int c, int y, int x) { return w[((static_cast<int64_t>(o) * Ci + c) * K + y) * K + x]; };
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = b[co];
          for (int ci = 0; ci < Ci; ++ci)
            for (int ky = 0; ky < K; ++ky)
              for (int kx = 0; kx < K; ++kx) {
                const int iy = oy * stride + ky - padding;
                const int ix = ox * stride + kx - padding;
                if (iy >= 0 && iy < H && ix >= 0 && ix < W) acc += wat(co, ci, ky, kx) * iat(n, ci, iy, ix);
              }
          out[((static_cast<int64_t>(n) * Co + co) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

// 101-point interpolated AP for a single class and IoU threshold, computed
// the slow way: for every score cutoff rebuild the matching from scratch,
// then evaluate every recall grid point by direct maximum over cutoffs.
inline double ap_ref(const std::vector<std::vector<Detection>>& dets, const std::vector<std::vector<GtInstance>>& gts,
                     int cls, double thr) {
  struct Ref {
    double score;
    int image;
    int idx;
  };
  std::vector<Ref> all;
  for (size_t i = 0; i < dets.size(); ++i) {
    for (size_t j = 0; j < dets[i].size(); ++j) {
      if (dets[i][j].cls == cls) all.push_back(Ref{dets[i][j].score, static_cast<int>(i), static_cast<int>(j)});
    }
  }
  std::sort(all.begin(), all.end(), [](const Ref& a, const Ref& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.idx < b.idx;
  });
  int gt_count = 0;
  for (const auto& img : gts) {
    for (const GtInstance& g : img) gt_count += g.cls == cls ? 1 : 0;
  }
  if (gt_count == 0) return -1.0;

  // tp count when only the strongest k detections exist
  std::vector<double> prec, rec;
  for (size_t k = 1; k <= all.size(); ++k) {
    std::vector<std::vector<char>> taken(gts.size());
    for (size_t i = 0; i < gts.size(); ++i) taken[i].assign(gts[i].size(), 0);
    int tp = 0;
    for (size_t r = 0; r < k; ++r) {
      const auto& img_gts = gts[static_cast<size_t>(all[r].image)];
      const Box& db = dets[static_cast<size_t>(all[r].image)][static_cast<size_t>(all[r].idx)].box;
      int best = -1;
      double best_iou = 0;
      for (size_t g = 0; g < img_gts.size(); ++g) {
        if (img_gts[g].cls != cls || taken[static_cast<size_t>(all[r].image)][g]) continue;
        const double v = iou(db, img_gts[g].box);
        if (v >= thr && v > best_iou) {
          best_iou = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        taken[static_cast<size_t>(all[r].image)][static_cast<size_t>(best)] = 1;
        ++tp;
      }
    }
    prec.push_back(static_cast<double>(tp) / static_cast<double>(k));
    rec.push_back(static_cast<double>(tp) / gt_count);
  }

  double total = 0;
  for (int g = 0; g <= 100; ++g) {
    const double want = g / 100.0;
    double best = 0;
    for (size_t k = 0; k < prec.size(); ++k) {
      if (rec[k] >= want) best = std::max(best, prec[k]);
    }
    total += best;
  }
  return total / 101.0;
}

}  // namespace pssdet::oracle
