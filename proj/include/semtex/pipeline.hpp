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

// Texture generation for a parameterized mesh.
//
// One set of style codes is chosen per object, from a style image
// (conditional) or from N(0, I) in w space (unconditional), and combined
// with per-view structure codes computed from each view's segmentation map.
// Both modes run through synthesize_views; they differ only in where the
// style codes come from.

#pragma once

#include "semtex/config.hpp"
#include "semtex/training.hpp"

#include <functional>
#include <map>

namespace semtex {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Called with the exact codes handed to the generator for each view.
using CodeObserver = std::function<void(int view, const StyleCodes<float>& codes)>;

/// Style codes [L - n, D] of one image (rows n..L of the style encoder).
Tensor<float> encode_style(const TrainState& state, const Image& style_image);

/// L - n vectors drawn i.i.d. from N(0, I) in w space.
Tensor<float> sample_style(const GeneratorConfig& config, std::uint64_t seed);

/// Structure codes per map, style codes shared by all of them. View i uses
/// noise drawn from derive_seed(seed, i).
TextureMapSet synthesize_views(const TrainState& state, const SegmentationMapSet& segs, const Tensor<float>& w_sty,
                               std::uint64_t seed, const CodeObserver& observer = {});

/// Requires a stage-3 state and exactly one map per configured view.
TextureMapSet conditional_generate(const TrainState& state, const SegmentationMapSet& segs, const Image& style_image,
                                   std::uint64_t seed, const CodeObserver& observer = {});
TextureMapSet unconditional_generate(const TrainState& state, const SegmentationMapSet& segs, std::uint64_t seed,
                                     const CodeObserver& observer = {});

struct GenerationFiles {
  ExportedFiles mesh;
  std::vector<std::filesystem::path> textures;
  std::vector<std::filesystem::path> renders;
};

/// Writes per-view texture PNGs, the textured OBJ/MTL/PNG and one render
/// per view camera into `out_dir`.
GenerationFiles write_generation(const Mesh& mesh, const UVAtlas& atlas, const TextureMapSet& textures,
                                 const std::filesystem::path& out_dir, int render_size);

/// Frozen extractor named by `spec`, or `builtin` when the source is "builtin".
FeatureExtractor<float> resolve_extractor(const ExtractorSpec& spec, const FeatureExtractor<float>& builtin);

struct EvalReport {
  std::map<std::string, double> values;  // fid, kid, miou, pixel_accuracy, n_real, n_fake
  std::string extractor_id;

  /// "key = value" lines in key order.
  std::string format() const;
};

enum class GenerationMode { conditional, unconditional };

/// Generates one texture per item of `data` from its segmentation (style
/// from the next item's image when conditional), then scores the textures
/// against `data.images`. mIoU and pixel accuracy are included when a
/// palette is given.
EvalReport evaluate(const TrainState& state, const Dataset& data, GenerationMode mode,
                    const FeatureExtractor<float>& extractor, const Palette* palette, std::uint64_t seed);

}  // namespace semtex
