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

// Pipeline configuration.
//
// Files are flat "key = value" lines with dotted section names; '#' starts a
// comment. Every key has a default, so a file only lists overrides:
//
//   seed = 3
//   generator.resolution = 32
//   stage1.max_steps = 2000
//   encoder.structure_input = silhouette
//
// resolved() prints every key in sorted order; parsing that text yields the
// same configuration, and printing it again yields the same bytes.

#pragma once

#include "semtex/dataset.hpp"
#include "semtex/geometry.hpp"
#include "semtex/training.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace semtex {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses "key = value" lines. Throws ConfigError naming the source and line
/// on malformed lines or repeated keys.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& source = "<text>");

/// "builtin" or the path of a saved extractor, with the identifier the file
/// must carry.
struct ExtractorSpec {
  std::string source = "builtin";
  std::string id;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  int num_classes = 4;
  std::string dataset_dir = "data";
  std::string output_dir = "run";
  /// "car6", "face1" or "custom" (then custom_views is used).
  std::string views = "car6";
  /// "name:fx,fy,fz:ux,uy,uz" entries separated by ';'.
  std::string custom_views;

  GeneratorConfig generator;
  int encoder_channels = 32;
  StructureEncoderKind structure_encoder_kind = StructureEncoderKind::coarse_to_fine;
  StructureInputKind structure_input_kind = StructureInputKind::segmentation;

  TrainConfig stage1, stage2, stage3;
  LossWeights loss_weights;
  ExtractorSpec perceptual, embedding, metric;

  int synth_count = 2200;
  int synth_meshes = 4;
  std::uint64_t synth_seed = 0;
  /// Trailing dataset items kept out of training for evaluation.
  int holdout = 200;
  int eval_count = 200;
  int render_size = 128;

  /// Desk-scale defaults.
  PipelineConfig();

  /// Applies overrides; unknown keys and malformed values throw ConfigError.
  void apply(const std::map<std::string, std::string>& values);
  std::string resolved() const;
  std::vector<std::string> keys() const;

  /// Cross-module consistency (R, D, n, L, N, C); throws ConfigError.
  void validate() const;

  std::vector<ViewSpec> view_specs() const;
  EncoderConfig encoder_config() const;
  /// Stage config with the shared seed and loss weights filled in.
  TrainConfig train_config(int stage) const;
  SyntheticSpec synthetic_spec() const;
};

/// Defaults overridden by the file at `path` (when non-empty).
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace semtex
