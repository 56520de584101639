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

#include "core/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace pssdet {

namespace {

// Right-aligned broadcast layout of two shapes. Strides are expressed in the
// output's coordinate system, zero along broadcast axes.
struct Bcast {
  std::vector<int> oshape;
  std::vector<int64_t> astr;
  std::vector<int64_t> bstr;
  int64_t numel = 0;
  bool same = false;
};

std::vector<int64_t> row_major_strides(const std::vector<int>& shape) {
  std::vector<int64_t> str(shape.size(), 0);
  int64_t acc = 1;
  for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
    str[static_cast<size_t>(d)] = acc;
    acc *= shape[static_cast<size_t>(d)];
  }
  return str;
}

Bcast make_bcast(const std::vector<int>& a, const std::vector<int>& b, const char* op) {
  Bcast bc;
  if (a == b) {
    bc.oshape = a;
    bc.numel = shape_numel(a);
    bc.same = true;
    return bc;
  }
  const int ra = static_cast<int>(a.size());
  const int rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  bc.oshape.resize(static_cast<size_t>(r));
  for (int d = 0; d < r; ++d) {
    const int da = d < r - ra ? 1 : a[static_cast<size_t>(d - (r - ra))];
    const int db = d < r - rb ? 1 : b[static_cast<size_t>(d - (r - rb))];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument(std::string(op) + ": shapes " + shape_to_string(a) + " and " + shape_to_string(b) +
                                  " not broadcastable at axis " + std::to_string(d));
    }
    bc.oshape[static_cast<size_t>(d)] = std::max(da, db);
  }
  const auto sa = row_major_strides(a);
  const auto sb = row_major_strides(b);
  bc.astr.assign(static_cast<size_t>(r), 0);
  bc.bstr.assign(static_cast<size_t>(r), 0);
  for (int d = 0; d < r; ++d) {
    if (d >= r - ra && a[static_cast<size_t>(d - (r - ra))] != 1) bc.astr[static_cast<size_t>(d)] = sa[static_cast<size_t>(d - (r - ra))];
    if (d >= r - rb && b[static_cast<size_t>(d - (r - rb))] != 1) bc.bstr[static_cast<size_t>(d)] = sb[static_cast<size_t>(d - (r - rb))];
  }
  bc.numel = shape_numel(bc.oshape);
  return bc;
}

template <class Fn>
void bcast_for_each(const Bcast& bc, Fn&& fn) {
  if (bc.same) {
    for (int64_t o = 0; o < bc.numel; ++o) fn(o, o, o);
    return;
  }
  const int r = static_cast<int>(bc.oshape.size());
  std::vector<int> idx(static_cast<size_t>(r), 0);
  int64_t ai = 0;
  int64_t bi = 0;
  for (int64_t o = 0;;) {
    fn(o, ai, bi);
    if (++o == bc.numel) break;
    int d = r - 1;
    for (;; --d) {
      ++idx[static_cast<size_t>(d)];
      ai += bc.astr[static_cast<size_t>(d)];
      bi += bc.bstr[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < bc.oshape[static_cast<size_t>(d)]) break;
      idx[static_cast<size_t>(d)] = 0;
      ai -= bc.astr[static_cast<size_t>(d)] * bc.oshape[static_cast<size_t>(d)];
      bi -= bc.bstr[static_cast<size_t>(d)] * bc.oshape[static_cast<size_t>(d)];
    }
  }
}

double f_relu(double x) { return x > 0.0 ? x : 0.0; }
double d_relu(double x, double) { return x > 0.0 ? 1.0 : 0.0; }
double f_exp(double x) { return std::exp(x); }
double d_exp(double, double y) { return y; }
double f_log(double x) { return std::log(x); }
double d_log(double x, double) { return 1.0 / x; }
double f_sqrt(double x) { return std::sqrt(x); }
double d_sqrt(double, double y) { return 0.5 / y; }

double f_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
double d_sigmoid(double, double y) { return y * (1.0 - y); }

double f_add(double x, double y) { return x + y; }
double da_add(double, double) { return 1.0; }
double db_add(double, double) { return 1.0; }
double f_sub(double x, double y) { return x - y; }
double da_sub(double, double) { return 1.0; }
double db_sub(double, double) { return -1.0; }
double f_mul(double x, double y) { return x * y; }
double da_mul(double, double y) { return y; }
double db_mul(double x, double) { return x; }
double f_div(double x, double y) { return x / y; }
double da_div(double, double y) { return 1.0 / y; }
double db_div(double x, double y) { return -x / (y * y); }
double f_min(double x, double y) { return x <= y ? x : y; }
double da_min(double x, double y) { return x <= y ? 1.0 : 0.0; }
double db_min(double x, double y) { return x <= y ? 0.0 : 1.0; }
double f_max(double x, double y) { return x >= y ? x : y; }
double da_max(double x, double y) { return x >= y ? 1.0 : 0.0; }
double db_max(double x, double y) { return x >= y ? 0.0 : 1.0; }

}  // namespace

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("Var: default-constructed variable has no value");
  return tape_->value(*this);
}

Tape::Node& Tape::node(Var v) { return nodes_[static_cast<size_t>(v.id_)]; }
const Tape::Node& Tape::node(Var v) const { return nodes_[static_cast<size_t>(v.id_)]; }

void Tape::check_owned(Var v, const char* op) const {
  if (v.tape_ != this || v.id_ < 0 || v.id_ >= static_cast<int>(nodes_.size())) {
    throw std::logic_error(std::string(op) + ": variable does not belong to this tape");
  }
}

Var Tape::record(Tensor value, std::function<void()> back) {
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(back)});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Tensor value) { return record(std::move(value), nullptr); }

const Tensor& Tape::value(Var v) const {
  check_owned(v, "value");
  return node(v).value;
}

const Tensor& Tape::grad(Var v) const {
  check_owned(v, "grad");
  const Node& n = node(v);
  if (n.grad.size() == 0) throw std::logic_error("grad: backward() has not been run on this tape");
  return n.grad;
}

Var Tape::unary_ew(Var a, double (*f)(double), double (*df)(double, double)) {
  check_owned(a, "unary");
  const Tensor& av = node(a).value;
  Tensor out(av.shape());
  const double* x = av.data();
  double* y = out.data();
  const int64_t n = av.size();
  for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
  const int aid = a.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, oid, df]() {
    const Node& on = nodes_[static_cast<size_t>(oid)];
    Node& an = nodes_[static_cast<size_t>(aid)];
    const double* x = an.value.data();
    const double* y = on.value.data();
    const double* g = on.grad.data();
    double* ga = an.grad.data();
    const int64_t n = an.value.size();
    for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * df(x[i], y[i]);
  };
  return o;
}

Var Tape::relu(Var a) { return unary_ew(a, f_relu, d_relu); }
Var Tape::exp(Var a) { return unary_ew(a, f_exp, d_exp); }
Var Tape::log(Var a) { return unary_ew(a, f_log, d_log); }
Var Tape::sigmoid(Var a) { return unary_ew(a, f_sigmoid, d_sigmoid); }
Var Tape::sqrt(Var a) { return unary_ew(a, f_sqrt, d_sqrt); }

Var Tape::neg(Var a) { return mul_scalar(a, -1.0); }

Var Tape::pow_const(Var a, double e) {
  check_owned(a, "pow_const");
  const Tensor& av = node(a).value;
  Tensor out(av.shape());
  const int64_t n = av.size();
  for (int64_t i = 0; i < n; ++i) out[i] = std::pow(av[i], e);
  const int aid = a.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, oid, e]() {
    if (e == 0.0) return;
    const Node& on = nodes_[static_cast<size_t>(oid)];
    Node& an = nodes_[static_cast<size_t>(aid)];
    const int64_t n = an.value.size();
    for (int64_t i = 0; i < n; ++i) an.grad[i] += on.grad[i] * e * std::pow(an.value[i], e - 1.0);
  };
  return o;
}

Var Tape::concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  int64_t total = 0;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (Var p : parts) {
    check_owned(p, "concat");
    total += node(p).value.size();
    ids.push_back(p.id_);
  }
  Tensor out({static_cast<int>(total)});
  int64_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = node(p).value;
    std::copy_n(pv.data(), pv.size(), out.data() + off);
    off += pv.size();
  }
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, ids = std::move(ids), oid]() {
    const Node& on = nodes_[static_cast<size_t>(oid)];
    int64_t off = 0;
    for (int id : ids) {
      Node& an = nodes_[static_cast<size_t>(id)];
      const int64_t n = an.value.size();
      for (int64_t i = 0; i < n; ++i) an.grad[i] += on.grad[off + i];
      off += n;
    }
  };
  return o;
}

Var Tape::add_scalar(Var a, double c) {
  check_owned(a, "add_scalar");
  Tensor out = node(a).value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += c;
  const int aid = a.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, oid]() {
    Node& an = nodes_[static_cast<size_t>(aid)];
    const Node& on = nodes_[static_cast<size_t>(oid)];
    for (int64_t i = 0; i < an.value.size(); ++i) an.grad[i] += on.grad[i];
  };
  return o;
}

Var Tape::mul_scalar(Var a, double c) {
  check_owned(a, "mul_scalar");
  Tensor out = node(a).value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= c;
  const int aid = a.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, oid, c]() {
    Node& an = nodes_[static_cast<size_t>(aid)];
    const Node& on = nodes_[static_cast<size_t>(oid)];
    for (int64_t i = 0; i < an.value.size(); ++i) an.grad[i] += on.grad[i] * c;
  };
  return o;
}

Var Tape::stop_gradient(Var a) {
  check_owned(a, "stop_gradient");
  return record(node(a).value, nullptr);
}

Var Tape::binary_ew(Var a, Var b, const char* name, double (*f)(double, double), double (*dfa)(double, double),
                    double (*dfb)(double, double)) {
  check_owned(a, name);
  check_owned(b, name);
  Bcast bc = make_bcast(node(a).value.shape(), node(b).value.shape(), name);
  Tensor out(bc.oshape);
  {
    const double* x = node(a).value.data();
    const double* y = node(b).value.data();
    double* z = out.data();
    bcast_for_each(bc, [&](int64_t o, int64_t ai, int64_t bi) { z[o] = f(x[ai], y[bi]); });
  }
  const int aid = a.id_;
  const int bid = b.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, bid, oid, bc = std::move(bc), dfa, dfb]() {
    const Node& on = nodes_[static_cast<size_t>(oid)];
    Node& an = nodes_[static_cast<size_t>(aid)];
    Node& bn = nodes_[static_cast<size_t>(bid)];
    const double* x = an.value.data();
    const double* y = bn.value.data();
    const double* g = on.grad.data();
    double* ga = an.grad.data();
    double* gb = bn.grad.data();
    bcast_for_each(bc, [&](int64_t o, int64_t ai, int64_t bi) {
      ga[ai] += g[o] * dfa(x[ai], y[bi]);
      gb[bi] += g[o] * dfb(x[ai], y[bi]);
    });
  };
  return o;
}

Var Tape::add(Var a, Var b) { return binary_ew(a, b, "add", f_add, da_add, db_add); }
Var Tape::sub(Var a, Var b) { return binary_ew(a, b, "sub", f_sub, da_sub, db_sub); }
Var Tape::mul(Var a, Var b) { return binary_ew(a, b, "mul", f_mul, da_mul, db_mul); }
Var Tape::div(Var a, Var b) { return binary_ew(a, b, "div", f_div, da_div, db_div); }
Var Tape::min(Var a, Var b) { return binary_ew(a, b, "min", f_min, da_min, db_min); }
Var Tape::max(Var a, Var b) { return binary_ew(a, b, "max", f_max, da_max, db_max); }

Var Tape::reshape(Var a, std::vector<int> shape) {
  check_owned(a, "reshape");
  const Tensor& av = node(a).value;
  if (shape_numel(shape) != av.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_to_string(av.shape()) + " as " + shape_to_string(shape));
  }
  Tensor out(std::move(shape), av.vec());
  const int aid = a.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, oid]() {
    Node& an = nodes_[static_cast<size_t>(aid)];
    const Node& on = nodes_[static_cast<size_t>(oid)];
    for (int64_t i = 0; i < an.value.size(); ++i) an.grad[i] += on.grad[i];
  };
  return o;
}

Var Tape::channel_slice(Var a, int c0, int c1) {
  check_owned(a, "channel_slice");
  const Tensor& av = node(a).value;
  if (av.rank() != 4) throw std::invalid_argument("channel_slice: expected rank-4 NCHW, got " + shape_to_string(av.shape()));
  const int N = av.dim(0), C = av.dim(1), H = av.dim(2), W = av.dim(3);
  if (c0 < 0 || c1 > C || c0 >= c1) {
    throw std::invalid_argument("channel_slice: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                ") out of bounds for " + std::to_string(C) + " channels (axis 1)");
  }
  const int Cs = c1 - c0;
  Tensor out({N, Cs, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < Cs; ++c)
      std::copy_n(av.data() + ((static_cast<int64_t>(n) * C + c0 + c) * plane), plane,
                  out.data() + ((static_cast<int64_t>(n) * Cs + c) * plane));
  const int aid = a.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, oid, N, C, Cs, c0, plane]() {
    Node& an = nodes_[static_cast<size_t>(aid)];
    const Node& on = nodes_[static_cast<size_t>(oid)];
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < Cs; ++c) {
        double* ga = an.grad.data() + ((static_cast<int64_t>(n) * C + c0 + c) * plane);
        const double* g = on.grad.data() + ((static_cast<int64_t>(n) * Cs + c) * plane);
        for (int64_t i = 0; i < plane; ++i) ga[i] += g[i];
      }
  };
  return o;
}

Var Tape::gather(Var a, std::vector<int64_t> flat_indices) {
  check_owned(a, "gather");
  const Tensor& av = node(a).value;
  Tensor out({static_cast<int>(flat_indices.size())});
  for (size_t i = 0; i < flat_indices.size(); ++i) {
    const int64_t j = flat_indices[i];
    if (j < 0 || j >= av.size()) {
      throw std::invalid_argument("gather: index " + std::to_string(j) + " out of range for " +
                                  std::to_string(av.size()) + " elements");
    }
    out[static_cast<int64_t>(i)] = av[j];
  }
  const int aid = a.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, oid, idx = std::move(flat_indices)]() {
    Node& an = nodes_[static_cast<size_t>(aid)];
    const Node& on = nodes_[static_cast<size_t>(oid)];
    for (size_t i = 0; i < idx.size(); ++i) an.grad[idx[i]] += on.grad[static_cast<int64_t>(i)];
  };
  return o;
}

Var Tape::sum(Var a) {
  check_owned(a, "sum");
  const Tensor& av = node(a).value;
  double acc = 0.0;
  for (int64_t i = 0; i < av.size(); ++i) acc += av[i];
  const int aid = a.id_;
  Var o = record(Tensor::scalar(acc), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, oid]() {
    Node& an = nodes_[static_cast<size_t>(aid)];
    const double g = nodes_[static_cast<size_t>(oid)].grad[0];
    for (int64_t i = 0; i < an.value.size(); ++i) an.grad[i] += g;
  };
  return o;
}

Var Tape::channel_max(Var a) {
  check_owned(a, "channel_max");
  const Tensor& av = node(a).value;
  if (av.rank() != 4) throw std::invalid_argument("channel_max: expected rank-4 NCHW, got " + shape_to_string(av.shape()));
  const int N = av.dim(0), C = av.dim(1), H = av.dim(2), W = av.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor out({N, 1, H, W});
  std::vector<int> arg(static_cast<size_t>(N * plane), 0);
  for (int n = 0; n < N; ++n) {
    const double* base = av.data() + static_cast<int64_t>(n) * C * plane;
    for (int64_t i = 0; i < plane; ++i) {
      double best = base[i];
      int bc = 0;
      for (int c = 1; c < C; ++c) {
        const double v = base[c * plane + i];
        if (v > best) {
          best = v;
          bc = c;
        }
      }
      out[static_cast<int64_t>(n) * plane + i] = best;
      arg[static_cast<size_t>(static_cast<int64_t>(n) * plane + i)] = bc;
    }
  }
  const int aid = a.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, oid, arg = std::move(arg), N, C, plane]() {
    Node& an = nodes_[static_cast<size_t>(aid)];
    const Node& on = nodes_[static_cast<size_t>(oid)];
    for (int n = 0; n < N; ++n) {
      double* ga = an.grad.data() + static_cast<int64_t>(n) * C * plane;
      const double* g = on.grad.data() + static_cast<int64_t>(n) * plane;
      for (int64_t i = 0; i < plane; ++i) ga[static_cast<int64_t>(arg[static_cast<size_t>(static_cast<int64_t>(n) * plane + i)]) * plane + i] += g[i];
    }
  };
  return o;
}

Var Tape::conv2d(Var input, Var weight, Var bias, int stride, int padding) {
  check_owned(input, "conv2d");
  check_owned(weight, "conv2d");
  check_owned(bias, "conv2d");
  const Tensor& iv = node(input).value;
  const Tensor& wv = node(weight).value;
  const Tensor& bv = node(bias).value;
  if (iv.rank() != 4) throw std::invalid_argument("conv2d: input must be NCHW, got " + shape_to_string(iv.shape()));
  if (wv.rank() != 4) throw std::invalid_argument("conv2d: weight must be OIKK, got " + shape_to_string(wv.shape()));
  if (wv.dim(2) != wv.dim(3)) {
    throw std::invalid_argument("conv2d: kernel must be square, got " + shape_to_string(wv.shape()) + " (axes 2,3)");
  }
  if (iv.dim(1) != wv.dim(1)) {
    throw std::invalid_argument("conv2d: input channels " + std::to_string(iv.dim(1)) + " != weight input channels " +
                                std::to_string(wv.dim(1)) + " (input axis 1, weight axis 1)");
  }
  if (bv.rank() != 1 || bv.dim(0) != wv.dim(0)) {
    throw std::invalid_argument("conv2d: bias shape " + shape_to_string(bv.shape()) + " must be (" +
                                std::to_string(wv.dim(0)) + ") to match weight axis 0");
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  const int N = iv.dim(0), Ci = iv.dim(1), H = iv.dim(2), W = iv.dim(3);
  const int Co = wv.dim(0), K = wv.dim(2);
  const int Ho = (H + 2 * padding - K) / stride + 1;
  const int Wo = (W + 2 * padding - K) / stride + 1;
  if (H + 2 * padding < K || W + 2 * padding < K) {
    throw std::invalid_argument("conv2d: kernel " + std::to_string(K) + " larger than padded input " +
                                shape_to_string(iv.shape()));
  }

  Tensor out({N, Co, Ho, Wo});
  {
    const double* ip = iv.data();
    const double* wp = wv.data();
    double* op = out.data();
    const int64_t iplane = static_cast<int64_t>(H) * W;
    const int64_t oplane = static_cast<int64_t>(Ho) * Wo;
    for (int n = 0; n < N; ++n) {
      for (int co = 0; co < Co; ++co) {
        double* oc = op + (static_cast<int64_t>(n) * Co + co) * oplane;
        const double bz = bv[co];
        for (int64_t i = 0; i < oplane; ++i) oc[i] = bz;
        for (int ci = 0; ci < Ci; ++ci) {
          const double* icp = ip + (static_cast<int64_t>(n) * Ci + ci) * iplane;
          const double* wk = wp + (static_cast<int64_t>(co) * Ci + ci) * K * K;
          for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
              const double wz = wk[ky * K + kx];
              for (int oy = 0; oy < Ho; ++oy) {
                const int iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= H) continue;
                const double* irow = icp + static_cast<int64_t>(iy) * W;
                double* orow = oc + static_cast<int64_t>(oy) * Wo;
                if (stride == 1) {
                  const int off = kx - padding;
                  const int xlo = std::max(0, -off);
                  const int xhi = std::min(Wo, W - off);
                  const double* ir = irow + off;
                  for (int ox = xlo; ox < xhi; ++ox) orow[ox] += wz * ir[ox];
                } else {
                  for (int ox = 0; ox < Wo; ++ox) {
                    const int ix = ox * stride + kx - padding;
                    if (ix >= 0 && ix < W) orow[ox] += wz * irow[ix];
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  const int iid = input.id_;
  const int wid = weight.id_;
  const int bid = bias.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, iid, wid, bid, oid, stride, padding]() {
    const Node& on = nodes_[static_cast<size_t>(oid)];
    Node& in = nodes_[static_cast<size_t>(iid)];
    Node& wn = nodes_[static_cast<size_t>(wid)];
    Node& bn = nodes_[static_cast<size_t>(bid)];
    const int N = in.value.dim(0), Ci = in.value.dim(1), H = in.value.dim(2), W = in.value.dim(3);
    const int Co = wn.value.dim(0), K = wn.value.dim(2);
    const int Ho = on.value.dim(2), Wo = on.value.dim(3);
    const int64_t iplane = static_cast<int64_t>(H) * W;
    const int64_t oplane = static_cast<int64_t>(Ho) * Wo;
    const double* ip = in.value.data();
    const double* wp = wn.value.data();
    const double* gp = on.grad.data();
    double* gip = in.grad.data();
    double* gwp = wn.grad.data();
    double* gbp = bn.grad.data();
    for (int n = 0; n < N; ++n) {
      for (int co = 0; co < Co; ++co) {
        const double* gc = gp + (static_cast<int64_t>(n) * Co + co) * oplane;
        double acc = 0.0;
        for (int64_t i = 0; i < oplane; ++i) acc += gc[i];
        gbp[co] += acc;
        for (int ci = 0; ci < Ci; ++ci) {
          const double* icp = ip + (static_cast<int64_t>(n) * Ci + ci) * iplane;
          double* gicp = gip + (static_cast<int64_t>(n) * Ci + ci) * iplane;
          const double* wk = wp + (static_cast<int64_t>(co) * Ci + ci) * K * K;
          double* gwk = gwp + (static_cast<int64_t>(co) * Ci + ci) * K * K;
          for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
              const double wz = wk[ky * K + kx];
              double wacc = 0.0;
              for (int oy = 0; oy < Ho; ++oy) {
                const int iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= H) continue;
                const double* irow = icp + static_cast<int64_t>(iy) * W;
                double* girow = gicp + static_cast<int64_t>(iy) * W;
                const double* grow = gc + static_cast<int64_t>(oy) * Wo;
                if (stride == 1) {
                  const int off = kx - padding;
                  const int xlo = std::max(0, -off);
                  const int xhi = std::min(Wo, W - off);
                  const double* ir = irow + off;
                  double* gir = girow + off;
                  for (int ox = xlo; ox < xhi; ++ox) {
                    wacc += grow[ox] * ir[ox];
                    gir[ox] += wz * grow[ox];
                  }
                } else {
                  for (int ox = 0; ox < Wo; ++ox) {
                    const int ix = ox * stride + kx - padding;
                    if (ix >= 0 && ix < W) {
                      wacc += grow[ox] * irow[ix];
                      girow[ix] += wz * grow[ox];
                    }
                  }
                }
              }
              gwk[ky * K + kx] += wacc;
            }
          }
        }
      }
    }
  };
  return o;
}

Var Tape::upsample2x(Var a) {
  check_owned(a, "upsample2x");
  const Tensor& av = node(a).value;
  if (av.rank() != 4) throw std::invalid_argument("upsample2x: expected rank-4 NCHW, got " + shape_to_string(av.shape()));
  const int N = av.dim(0), C = av.dim(1), H = av.dim(2), W = av.dim(3);
  const int Ho = 2 * H, Wo = 2 * W;

  // Half-pixel sampling: out(o) reads input coordinate o/2 - 0.25, clamped.
  auto make_axis = [](int n, std::vector<int>& i0, std::vector<int>& i1, std::vector<double>& t) {
    i0.resize(static_cast<size_t>(2 * n));
    i1.resize(static_cast<size_t>(2 * n));
    t.resize(static_cast<size_t>(2 * n));
    for (int o = 0; o < 2 * n; ++o) {
      const double f = 0.5 * o - 0.25;
      const int lo = static_cast<int>(std::floor(f));
      t[static_cast<size_t>(o)] = f - lo;
      i0[static_cast<size_t>(o)] = std::clamp(lo, 0, n - 1);
      i1[static_cast<size_t>(o)] = std::clamp(lo + 1, 0, n - 1);
    }
  };
  std::vector<int> y0, y1, x0, x1;
  std::vector<double> ty, tx;
  make_axis(H, y0, y1, ty);
  make_axis(W, x0, x1, tx);

  Tensor out({N, C, Ho, Wo});
  const int64_t iplane = static_cast<int64_t>(H) * W;
  const int64_t oplane = static_cast<int64_t>(Ho) * Wo;
  for (int nc = 0; nc < N * C; ++nc) {
    const double* src = av.data() + nc * iplane;
    double* dst = out.data() + nc * oplane;
    for (int oy = 0; oy < Ho; ++oy) {
      const double wy = ty[static_cast<size_t>(oy)];
      const double* r0 = src + static_cast<int64_t>(y0[static_cast<size_t>(oy)]) * W;
      const double* r1 = src + static_cast<int64_t>(y1[static_cast<size_t>(oy)]) * W;
      double* orow = dst + static_cast<int64_t>(oy) * Wo;
      for (int ox = 0; ox < Wo; ++ox) {
        const double wx = tx[static_cast<size_t>(ox)];
        const int a0 = x0[static_cast<size_t>(ox)], a1 = x1[static_cast<size_t>(ox)];
        orow[ox] = (1.0 - wy) * ((1.0 - wx) * r0[a0] + wx * r0[a1]) + wy * ((1.0 - wx) * r1[a0] + wx * r1[a1]);
      }
    }
  }
  const int aid = a.id_;
  Var o = record(std::move(out), nullptr);
  const int oid = o.id_;
  node(o).back = [this, aid, oid, y0 = std::move(y0), y1 = std::move(y1), x0 = std::move(x0), x1 = std::move(x1),
                  ty = std::move(ty), tx = std::move(tx), N, C, H, W, Ho, Wo]() {
    Node& an = nodes_[static_cast<size_t>(aid)];
    const Node& on = nodes_[static_cast<size_t>(oid)];
    const int64_t iplane = static_cast<int64_t>(H) * W;
    const int64_t oplane = static_cast<int64_t>(Ho) * Wo;
    for (int nc = 0; nc < N * C; ++nc) {
      double* gsrc = an.grad.data() + nc * iplane;
      const double* g = on.grad.data() + nc * oplane;
      for (int oy = 0; oy < Ho; ++oy) {
        const double wy = ty[static_cast<size_t>(oy)];
        double* r0 = gsrc + static_cast<int64_t>(y0[static_cast<size_t>(oy)]) * W;
        double* r1 = gsrc + static_cast<int64_t>(y1[static_cast<size_t>(oy)]) * W;
        const double* grow = g + static_cast<int64_t>(oy) * Wo;
        for (int ox = 0; ox < Wo; ++ox) {
          const double wx = tx[static_cast<size_t>(ox)];
          const int a0 = x0[static_cast<size_t>(ox)], a1 = x1[static_cast<size_t>(ox)];
          const double gz = grow[ox];
          r0[a0] += gz * (1.0 - wy) * (1.0 - wx);
          r0[a1] += gz * (1.0 - wy) * wx;
          r1[a0] += gz * wy * (1.0 - wx);
          r1[a1] += gz * wy * wx;
        }
      }
    }
  };
  return o;
}

void Tape::backward(Var loss) {
  check_owned(loss, "backward");
  if (node(loss).value.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_to_string(node(loss).value.shape()));
  }
  for (Node& n : nodes_) {
    if (n.grad.size() != n.value.size()) {
      n.grad = Tensor(n.value.shape());
    } else {
      std::fill(n.grad.vec().begin(), n.grad.vec().end(), 0.0);
    }
  }
  node(loss).grad[0] = 1.0;
  for (int i = loss.id_; i >= 0; --i) {
    if (nodes_[static_cast<size_t>(i)].back) nodes_[static_cast<size_t>(i)].back();
  }
}

}  // namespace pssdet
