// Copyright 2026 The semtex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "semtex/dataset.hpp"

#include "semtex/core/rng.hpp"
#include "semtex/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace semtex {
namespace fs = std::filesystem;

namespace {

const Eigen::Vector3f kBaseColors[] = {
    {0.8f, 0.8f, 0.8f},    // background
    {0.7f, -0.6f, -0.6f},  // body
    {-0.6f, -0.2f, 0.8f},  // window
    {-0.8f, -0.8f, -0.8f}, // wheel
    {0.9f, 0.8f, -0.7f},   // light
    {-0.6f, 0.7f, -0.5f},  // trim
    {0.8f, -0.2f, 0.9f},   // mirror
    {-0.5f, 0.8f, 0.8f},   // plate
};

std::string item_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", i);
  return buf;
}

struct Canvas {
  int size;
  LabelImage labels;

  explicit Canvas(int r) : size(r), labels(LabelImage::Zero(r, r)) {}

  // Coordinates are fractions of the image side.
  void rect(double x0, double y0, double x1, double y1, int label) {
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double px = (x + 0.5) / size, py = (y + 0.5) / size;
        if (px >= x0 && px < x1 && py >= y0 && py < y1) labels(y, x) = label;
      }
  }
  void disc(double cx, double cy, double radius, int label) {
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dx = (x + 0.5) / size - cx, dy = (y + 0.5) / size - cy;
        if (dx * dx + dy * dy < radius * radius) labels(y, x) = label;
      }
  }
};

}  // namespace

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw std::out_of_range("dataset slice out of range");
  Dataset out;
  out.num_classes = num_classes;
  out.names.assign(names.begin() + begin, names.begin() + end);
  out.images.assign(images.begin() + begin, images.begin() + end);
  if (has_labels()) out.labels.assign(labels.begin() + begin, labels.begin() + end);
  return out;
}

void Dataset::validate() const {
  if (names.size() != images.size()) throw std::invalid_argument("dataset has " + std::to_string(names.size()) +
                                                                 " names for " + std::to_string(images.size()) +
                                                                 " images");
  if (has_labels() && labels.size() != images.size())
    throw std::invalid_argument("dataset has " + std::to_string(labels.size()) + " label maps for " +
                                std::to_string(images.size()) + " images");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].rows() != image_height(images[i]) || labels[i].cols() != image_width(images[i]))
      throw std::invalid_argument("label map of " + names[i] + " does not match its image size");
    if (labels[i].size() > 0 && (labels[i].minCoeff() < 0 || labels[i].maxCoeff() >= num_classes))
      throw std::invalid_argument("label map of " + names[i] + " has labels outside [0, " +
                                  std::to_string(num_classes) + ")");
  }
}

Dataset load_dataset(const fs::path& dir, int num_classes) {
  const fs::path image_dir = dir / "images", label_dir = dir / "labels";
  if (!fs::is_directory(image_dir)) throw std::runtime_error("dataset directory " + dir.string() + " has no images/");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(image_dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Dataset data;
  data.num_classes = num_classes;
  const bool labeled = fs::is_directory(label_dir);
  for (const auto& f : files) {
    data.names.push_back(f.stem().string());
    data.images.push_back(read_png(f));
    if (labeled) {
      const fs::path lp = label_dir / f.filename();
      if (!fs::exists(lp)) throw std::runtime_error("missing label map " + lp.string());
      data.labels.push_back(read_label_png(lp));
    }
  }
  data.validate();
  return data;
}

Palette synthetic_palette(int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("at least two classes required");
  Palette p;
  const int fixed = static_cast<int>(std::size(kBaseColors));
  for (int c = 0; c < std::min(num_classes, fixed); ++c) p.push_back(kBaseColors[c]);
  // Further classes: points of a 5x5x5 lattice not already taken.
  for (int i = 0; static_cast<int>(p.size()) < num_classes && i < 125; ++i) {
    const Eigen::Vector3f c(-0.9f + 0.45f * static_cast<float>(i % 5), -0.9f + 0.45f * static_cast<float>(i / 5 % 5),
                            -0.9f + 0.45f * static_cast<float>(i / 25));
    bool clash = false;
    for (const auto& q : p) clash = clash || (q - c).norm() < 0.3f;
    if (!clash) p.push_back(c);
  }
  if (static_cast<int>(p.size()) < num_classes)
    throw std::invalid_argument("no palette for " + std::to_string(num_classes) + " classes");
  return p;
}

Dataset generate_synthetic_images(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw std::invalid_argument("at least two classes required");
  if (spec.count < 1) throw std::invalid_argument("count must be >= 1");
  if (spec.resolution < 8) throw std::invalid_argument("resolution must be >= 8");
  const Palette palette = synthetic_palette(spec.num_classes);
  const int C = spec.num_classes, R = spec.resolution;
  Rng rng(derive_seed(spec.seed, 0));
  Dataset data;
  data.num_classes = C;
  for (int i = 0; i < spec.count; ++i) {
    Canvas canvas(R);
    const double x0 = rng.uniform(0.06, 0.18), x1 = rng.uniform(0.82, 0.94);
    const double top = rng.uniform(0.32, 0.45), bottom = rng.uniform(0.68, 0.76);
    canvas.rect(x0, top, x1, bottom, 1);
    const double w = x1 - x0;
    if (C > 2) {
      const double ww = rng.uniform(0.25, 0.5) * w;
      const double wx0 = x0 + rng.uniform(0.05 * w, 0.95 * w - ww);
      canvas.rect(wx0, top + 0.04, wx0 + ww, top + rng.uniform(0.5, 0.75) * (bottom - top), 2);
    }
    if (C > 3) {
      canvas.disc(x0 + rng.uniform(0.12, 0.3) * w, bottom, rng.uniform(0.08, 0.12), 3);
      canvas.disc(x1 - rng.uniform(0.12, 0.3) * w, bottom, rng.uniform(0.08, 0.12), 3);
    }
    for (int c = 4; c < C; ++c) {
      const double px = rng.uniform(x0, x1 - 0.08), py = rng.uniform(top + 0.05, bottom - 0.12);
      canvas.rect(px, py, px + 0.08, py + 0.08, c);
    }
    std::vector<Eigen::Vector3f> colors(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c)
      for (int ch = 0; ch < 3; ++ch)
        colors[c][ch] = palette[c][ch] + static_cast<float>(rng.uniform(-0.15, 0.15));
    Image img({3, R, R});
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x)
        for (int ch = 0; ch < 3; ++ch) img[(ch * R + y) * R + x] = colors[canvas.labels(y, x)][ch];
    data.names.push_back(item_name(i));
    data.images.push_back(std::move(img));
    data.labels.push_back(std::move(canvas.labels));
  }
  return data;
}

std::vector<Mesh> generate_synthetic_meshes(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw std::invalid_argument("at least two classes required");
  Rng rng(derive_seed(spec.seed, 1));
  auto clamp_label = [&](int label) { return label < spec.num_classes ? label : 1; };
  std::vector<Mesh> meshes;
  for (int m = 0; m < spec.num_meshes; ++m) {
    const double length = rng.uniform(1.6, 2.2), width = rng.uniform(0.8, 1.0), height = rng.uniform(0.4, 0.55);
    const double clearance = 0.2, wheel = rng.uniform(0.18, 0.24);
    std::vector<Mesh> parts;
    parts.push_back(box_mesh({-width / 2, clearance, -length / 2}, {width / 2, clearance + height, length / 2}, 1));
    const double cabin_len = rng.uniform(0.45, 0.6) * length, cabin_h = rng.uniform(0.3, 0.4);
    const double cabin_z = rng.uniform(-0.15, 0.05) * length;
    parts.push_back(box_mesh({-width / 2 + 0.05, clearance + height, cabin_z - cabin_len / 2},
                             {width / 2 - 0.05, clearance + height + cabin_h, cabin_z + cabin_len / 2},
                             clamp_label(2)));
    for (double sx : {-1.0, 1.0})
      for (double sz : {-1.0, 1.0}) {
        const double cx = sx * (width / 2 + 0.04), cz = sz * (length / 2 - 0.35);
        parts.push_back(box_mesh({cx - 0.06, clearance - 0.18, cz - wheel}, {cx + 0.06, clearance - 0.18 + 2 * wheel, cz + wheel},
                                 clamp_label(3)));
      }
    for (int c = 4; c < spec.num_classes; ++c) {
      const double x = rng.uniform(-width / 2 + 0.1, width / 2 - 0.2);
      parts.push_back(box_mesh({x, clearance + 0.1, length / 2}, {x + 0.12, clearance + 0.2, length / 2 + 0.04}, c));
    }
    meshes.push_back(normalize_mesh(merge_meshes(parts)));
  }
  return meshes;
}

void save_palette(const Palette& palette, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  char buf[96];
  for (const auto& c : palette) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", c.x(), c.y(), c.z());
    f << buf;
  }
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

Palette load_palette(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  Palette p;
  std::string line;
  for (int number = 1; std::getline(f, line); ++number) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    Eigen::Vector3f c;
    if (!(is >> c.x() >> c.y() >> c.z())) throw ParseError(path.string(), number, "expected three numbers");
    p.push_back(c);
  }
  return p;
}

void write_synthetic_dataset(const SyntheticSpec& spec, const fs::path& out_dir) {
  const Dataset data = generate_synthetic_images(spec);
  const auto meshes = generate_synthetic_meshes(spec);
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "labels");
  fs::create_directories(out_dir / "meshes");
  for (std::size_t i = 0; i < data.size(); ++i) {
    write_png(out_dir / "images" / (data.names[i] + ".png"), data.images[i]);
    write_label_png(out_dir / "labels" / (data.names[i] + ".png"), data.labels[i]);
  }
  for (std::size_t m = 0; m < meshes.size(); ++m)
    save_mesh(meshes[m], out_dir / "meshes" / ("vehicle" + std::to_string(m) + ".obj"));
  save_palette(synthetic_palette(spec.num_classes), out_dir / "palette.txt");
}

}  // namespace semtex
