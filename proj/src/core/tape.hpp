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

#include <functional>
#include <vector>

#include "core/tensor.hpp"

namespace pssdet {

class Tape;

// Handle to a tensor recorded on a tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const std::vector<int>& shape() const { return value().shape(); }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Define-by-run reverse-mode tape over dense double tensors. A fresh tape is
// built for every forward pass; operations append nodes in topological order.
// Confine each tape to a single thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);

  // Elementwise unary.
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sigmoid(Var a);
  Var sqrt(Var a);
  Var neg(Var a);
  Var pow_const(Var a, double e);
  Var add_scalar(Var a, double c);
  Var mul_scalar(Var a, double c);

  // Forward identity whose backward contribution is exactly zero.
  Var stop_gradient(Var a);

  // Elementwise binary with numpy-style broadcasting.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var min(Var a, Var b);
  Var max(Var a, Var b);

  // Shape and indexing.
  Var reshape(Var a, std::vector<int> shape);
  // Flattens every part and joins them into one rank-1 tensor.
  Var concat(const std::vector<Var>& parts);
  Var channel_slice(Var a, int c0, int c1);  // NCHW, channels [c0, c1)
  Var gather(Var a, std::vector<int64_t> flat_indices);
  Var sum(Var a);  // all-reduce to a scalar

  // NCHW -> (N,1,H,W) max over the channel axis.
  Var channel_max(Var a);

  // Cross-correlation with zero padding. input (N,Ci,H,W), weight
  // (Co,Ci,K,K), bias (Co).
  Var conv2d(Var input, Var weight, Var bias, int stride, int padding);

  // Bilinear 2x upsample of an NCHW map (half-pixel centers, clamped edges).
  Var upsample2x(Var a);

  // Reverse accumulation from a scalar loss. Resets all gradient buffers
  // first, so repeated calls on one tape are independent.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> back;  // empty for leaves and cut edges
  };

  Var record(Tensor value, std::function<void()> back);
  Node& node(Var v);
  const Node& node(Var v) const;
  void check_owned(Var v, const char* op) const;

  Var binary_ew(Var a, Var b, const char* name, double (*f)(double, double), double (*dfa)(double, double),
                double (*dfb)(double, double));
  Var unary_ew(Var a, double (*f)(double), double (*df)(double, double));  // df(x, y)

  std::vector<Node> nodes_;
};

}  // namespace pssdet
