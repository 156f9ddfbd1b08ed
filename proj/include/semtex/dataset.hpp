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

// Image/label datasets and the procedural toy dataset.
//
// On disk: images/<name>.png, labels/<name>.png (paired by name),
// meshes/<name>.obj with meshes/<name>.labels.

#pragma once

#include "semtex/geometry.hpp"
#include "semtex/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace semtex {

struct Dataset {
  std::vector<std::string> names;
  std::vector<Image> images;
  std::vector<LabelImage> labels;  // empty or one per image
  int num_classes = 0;

  std::size_t size() const { return images.size(); }
  bool has_labels() const { return !labels.empty(); }
  /// Items [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
  /// Throws on size mismatches or out-of-range labels.
  void validate() const;
};

/// Reads a dataset directory. Labels are loaded when labels/ exists.
Dataset load_dataset(const std::filesystem::path& dir, int num_classes);

struct SyntheticSpec {
  int count = 2000;
  int resolution = 32;
  int num_classes = 4;
  int num_meshes = 4;
  std::uint64_t seed = 0;
};

/// Canonical colour of every class: background, body, window, wheel, then
/// extra part colours.
Palette synthetic_palette(int num_classes);

/// Procedural side-view vehicles: body, window and wheel regions (plus
/// small extra parts for classes >= 4), per-sample colours jittered around
/// the palette.
Dataset generate_synthetic_images(const SyntheticSpec& spec);

/// Boxy vehicles with per-face part labels, normalized.
std::vector<Mesh> generate_synthetic_meshes(const SyntheticSpec& spec);

/// One "r g b" line per class.
void save_palette(const Palette& palette, const std::filesystem::path& path);
Palette load_palette(const std::filesystem::path& path);

/// Writes images, labels, meshes and palette.txt under `out_dir`.
void write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace semtex
