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

#include "core/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "core/rng.hpp"

namespace pssdet {

namespace {

constexpr int kPlacementRetries = 40;
constexpr double kObjectNoise = 0.02;

// One saturated color per class so classification stays easy and experiments
// isolate assignment and suppression behavior.
constexpr double kClassColor[kNumShapeClasses][3] = {
    {0.85, 0.20, 0.20},  // disk
    {0.20, 0.80, 0.25},  // square
    {0.25, 0.40, 0.90},  // triangle
};

struct Placed {
  int cls = 0;
  Box box;
  double r = 0;  // disk radius, box-derived for other shapes
};

bool inside_triangle(double px, double py, const Box& b) {
  // apex at the top-center, base along the bottom edge
  const double ax = 0.5 * (b.x1 + b.x2), ay = b.y1;
  const double bx = b.x1, by = b.y2;
  const double cx = b.x2, cy = b.y2;
  auto side = [&](double x0, double y0, double x1, double y1) {
    return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
  };
  const double d1 = side(ax, ay, bx, by);
  const double d2 = side(bx, by, cx, cy);
  const double d3 = side(cx, cy, ax, ay);
  const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(has_neg && has_pos);
}

bool covers(const Placed& p, double px, double py) {
  switch (p.cls) {
    case 0: {
      const double dx = px - p.box.cx(), dy = py - p.box.cy();
      return dx * dx + dy * dy <= p.r * p.r;
    }
    case 1:
      return px >= p.box.x1 && px <= p.box.x2 && py >= p.box.y1 && py <= p.box.y2;
    default:
      return inside_triangle(px, py, p.box);
  }
}

}  // namespace

void validate_config(const DataConfig& cfg) {
  if (cfg.height < 16 || cfg.width < 16) throw std::invalid_argument("image size must be at least 16x16");
  if (cfg.height % 16 != 0 || cfg.width % 16 != 0) throw std::invalid_argument("image size must be divisible by 16");
  if (cfg.min_objects < 0 || cfg.max_objects < cfg.min_objects) {
    throw std::invalid_argument("object count range is empty");
  }
  if (cfg.overlap_cap < 0 || cfg.overlap_cap > 1) throw std::invalid_argument("overlap_cap must be in [0, 1]");
  if (cfg.noise < 0 || cfg.noise > 0.5) throw std::invalid_argument("noise must be in [0, 0.5]");
}

Scene make_scene(uint64_t seed, int image_id, const DataConfig& cfg) {
  validate_config(cfg);
  Rng rng = derived_rng(seed, "scene", static_cast<uint64_t>(image_id));
  const int h = cfg.height, w = cfg.width;

  Scene scene;
  scene.image = Tensor({3, h, w});
  for (int c = 0; c < 3; ++c) {
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
      scene.image[static_cast<int64_t>(c) * h * w + i] = std::clamp(0.45 + rng.uniform(-cfg.noise, cfg.noise), 0.0, 1.0);
    }
  }

  const int want = cfg.min_objects + rng.next_int(cfg.max_objects - cfg.min_objects + 1);
  const double max_side = std::min(h, w) * 0.6;
  std::vector<Placed> placed;
  for (int k = 0; k < want; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < kPlacementRetries && !ok; ++attempt) {
      Placed p;
      p.cls = rng.next_int(kNumShapeClasses);
      const double bw = rng.uniform(kMinShapeSide, max_side);
      const double bh = p.cls == 2 ? rng.uniform(kMinShapeSide, max_side) : bw;
      const double cx = rng.uniform(bw / 2 + 1, w - bw / 2 - 1);
      const double cy = rng.uniform(bh / 2 + 1, h - bh / 2 - 1);
      p.box = Box{cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2};
      p.r = bw / 2;
      bool clear = true;
      for (const Placed& q : placed) clear = clear && iou(p.box, q.box) <= cfg.overlap_cap;
      if (clear) {
        placed.push_back(p);
        ok = true;
      }
    }
    if (!ok) ++scene.skipped;
  }

  for (const Placed& p : placed) {
    double color[3];
    for (int c = 0; c < 3; ++c) color[c] = std::clamp(kClassColor[p.cls][c] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    const int y0 = std::max(0, static_cast<int>(std::floor(p.box.y1)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(p.box.y2)));
    const int x0 = std::max(0, static_cast<int>(std::floor(p.box.x1)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(p.box.x2)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!covers(p, x + 0.5, y + 0.5)) continue;
        for (int c = 0; c < 3; ++c) {
          scene.image[(static_cast<int64_t>(c) * h + y) * w + x] =
              std::clamp(color[c] + rng.uniform(-kObjectNoise, kObjectNoise), 0.0, 1.0);
        }
      }
    }
    scene.objects.push_back(GtInstance{p.box, p.cls});
  }
  return scene;
}

Scene hflip(const Scene& scene) {
  const int h = scene.image.dim(1), w = scene.image.dim(2);
  Scene out;
  out.image = Tensor({3, h, w});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.image[(static_cast<int64_t>(c) * h + y) * w + x] =
            scene.image[(static_cast<int64_t>(c) * h + y) * w + (w - 1 - x)];
      }
    }
  }
  out.objects.reserve(scene.objects.size());
  for (const GtInstance& g : scene.objects) {
    out.objects.push_back(GtInstance{Box{w - g.box.x2, g.box.y1, w - g.box.x1, g.box.y2}, g.cls});
  }
  out.skipped = scene.skipped;
  return out;
}

std::vector<uint8_t> to_rgb8(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("image must be (3, H, W), got " + shape_to_string(image.shape()));
  }
  const int h = image.dim(1), w = image.dim(2);
  std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image[(static_cast<int64_t>(c) * h + y) * w + x], 0.0, 1.0);
        bytes[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return bytes;
}

void write_ppm(const std::string& path, const Tensor& image) {
  const std::vector<uint8_t> bytes = to_rgb8(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P6\n" << image.dim(2) << " " << image.dim(1) << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error(path + ": not a P6 ppm file");
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w <= 0 || h <= 0) throw std::runtime_error(path + ": bad ppm header");
  if (maxval != 255) throw std::runtime_error(path + ": unsupported maxval " + std::to_string(maxval));
  in.get();  // single whitespace byte before the payload
  std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw std::runtime_error(path + ": truncated pixel data");
  Tensor image({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        image[(static_cast<int64_t>(c) * h + y) * w + x] =
            bytes[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)] / 255.0;
      }
    }
  }
  return image;
}

namespace {

std::string image_file_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05d.ppm", id);
  return buf;
}

}  // namespace

DatasetIndex generate_dataset(uint64_t seed, int count, const DataConfig& cfg, const std::string& out_dir) {
  validate_config(cfg);
  if (count < 0) throw std::invalid_argument("count must be non-negative");
  std::filesystem::create_directories(out_dir);
  DatasetIndex index;
  index.records.reserve(static_cast<size_t>(count));
  for (int id = 0; id < count; ++id) {
    Scene scene = make_scene(seed, id, cfg);
    if (scene.skipped > 0) {
      std::cerr << "image " << id << ": skipped " << scene.skipped << " placement(s) after " << kPlacementRetries
                << " retries\n";
    }
    ImageRecord rec;
    rec.id = id;
    rec.file = image_file_name(id);
    rec.width = cfg.width;
    rec.height = cfg.height;
    rec.objects = scene.objects;
    write_ppm((std::filesystem::path(out_dir) / rec.file).string(), scene.image);
    index.records.push_back(std::move(rec));
  }
  save_annotations((std::filesystem::path(out_dir) / "annotations.json").string(), index);
  return index;
}

void save_annotations(const std::string& path, const DatasetIndex& index) {
  nlohmann::json images = nlohmann::json::array();
  for (const ImageRecord& rec : index.records) {
    nlohmann::json objects = nlohmann::json::array();
    for (const GtInstance& g : rec.objects) {
      objects.push_back({{"class", g.cls}, {"bbox", {g.box.x1, g.box.y1, g.box.x2, g.box.y2}}});
    }
    images.push_back({{"id", rec.id},
                      {"file", rec.file},
                      {"width", rec.width},
                      {"height", rec.height},
                      {"objects", std::move(objects)}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << nlohmann::json{{"images", std::move(images)}}.dump(2) << "\n";
  if (!out) throw std::runtime_error("short write to " + path);
}

DatasetIndex load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  if (!root.is_object() || !root.contains("images") || !root["images"].is_array()) {
    throw std::runtime_error(path + ": expected an object with an \"images\" array");
  }

  DatasetIndex index;
  const auto& images = root["images"];
  for (size_t i = 0; i < images.size(); ++i) {
    const std::string where = path + ": images[" + std::to_string(i) + "]";
    try {
      const auto& jr = images[i];
      ImageRecord rec;
      rec.id = jr.at("id").get<int>();
      rec.file = jr.at("file").get<std::string>();
      rec.width = jr.at("width").get<int>();
      rec.height = jr.at("height").get<int>();
      for (const auto& jo : jr.at("objects")) {
        GtInstance g;
        g.cls = jo.at("class").get<int>();
        const auto& bb = jo.at("bbox");
        if (!bb.is_array() || bb.size() != 4) throw std::runtime_error("bbox must hold four numbers");
        g.box = Box{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>()};
        if (g.cls < 0 || g.cls >= kNumShapeClasses) {
          throw std::runtime_error("class " + std::to_string(g.cls) + " out of range");
        }
        if (!g.box.valid()) throw std::runtime_error("bbox is not a valid box");
        if (g.box.x1 < 0 || g.box.y1 < 0 || g.box.x2 > rec.width || g.box.y2 > rec.height) {
          throw std::runtime_error("bbox exceeds image bounds");
        }
        rec.objects.push_back(g);
      }
      index.records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  return index;
}

}  // namespace pssdet
