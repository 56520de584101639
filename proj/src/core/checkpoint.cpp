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

#include "core/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace pssdet {

static_assert(std::endian::native == std::endian::little, "checkpoint io assumes a little endian host");

namespace {

constexpr char kMagic[4] = {'P', 'S', 'S', 'D'};

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::ifstream& in, const std::string& path, const char* what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error(path + ": truncated checkpoint while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params, const std::string& config_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(kMagic, 4);
  put<uint32_t>(out, kCheckpointVersion);
  put<uint32_t>(out, static_cast<uint32_t>(params.size()));
  put<uint32_t>(out, static_cast<uint32_t>(config_json.size()));
  out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
  for (const Param& p : params) {
    if (p.name.size() > std::numeric_limits<uint16_t>::max()) {
      throw std::runtime_error(path + ": parameter name too long: " + p.name);
    }
    put<uint16_t>(out, static_cast<uint16_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<uint8_t>(out, static_cast<uint8_t>(p.value.rank()));
    for (int d = 0; d < p.value.rank(); ++d) put<uint32_t>(out, static_cast<uint32_t>(p.value.dim(d)));
    for (int64_t i = 0; i < p.value.size(); ++i) put<float>(out, static_cast<float>(p.value[i]));
  }
  out.flush();
  if (!out) throw std::runtime_error(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open checkpoint");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error(path + ": not a checkpoint file (bad magic)");
  }
  const auto version = take<uint32_t>(in, path, "version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = take<uint32_t>(in, path, "parameter count");
  const auto config_len = take<uint32_t>(in, path, "config length");
  Checkpoint ckpt;
  ckpt.config_json.resize(config_len);
  if (config_len > 0) {
    in.read(ckpt.config_json.data(), config_len);
    if (!in) throw std::runtime_error(path + ": truncated checkpoint while reading config");
  }
  ckpt.params.reserve(count);
  for (uint32_t k = 0; k < count; ++k) {
    const auto name_len = take<uint16_t>(in, path, "parameter name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error(path + ": truncated checkpoint while reading parameter name");
    const auto rank = take<uint8_t>(in, path, "parameter rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(take<uint32_t>(in, path, "parameter dim"));
    Tensor t(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(take<float>(in, path, name.c_str()));
    ckpt.params.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void restore_params(ParamSet& params, const Checkpoint& ckpt) {
  for (const auto& [name, tensor] : ckpt.params) {
    const int idx = params.index_of(name);
    if (idx < 0) throw std::runtime_error("restore_params: checkpoint parameter " + name + " not present in model");
    Param& p = params.at(idx);
    if (!p.value.same_shape(tensor)) {
      throw std::runtime_error("restore_params: shape mismatch for " + name + ": model " +
                               shape_to_string(p.value.shape()) + " vs checkpoint " + shape_to_string(tensor.shape()));
    }
    p.value = tensor;
    std::fill(p.velocity.vec().begin(), p.velocity.vec().end(), 0.0);
  }
  if (static_cast<int>(ckpt.params.size()) != params.size()) {
    throw std::runtime_error("restore_params: checkpoint has " + std::to_string(ckpt.params.size()) +
                             " parameters, model has " + std::to_string(params.size()));
  }
}

}  // namespace pssdet
