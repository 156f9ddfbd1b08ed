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

#include "semtex/pipeline.hpp"

#include "semtex/extractor_io.hpp"
#include "semtex/io.hpp"
#include "semtex/metrics.hpp"

#include <charconv>
#include <sstream>

namespace semtex {
namespace fs = std::filesystem;

namespace {

void require_stage3(const TrainState& st) {
  if (st.stage < 3 || !st.generator_ema || !st.style_encoder || !st.structure_encoder)
    throw PipelineError("generation needs a stage-3 checkpoint, this one is at stage " + std::to_string(st.stage));
}

void require_views(const TrainState& st, const SegmentationMapSet& segs) {
  const int n = st.generator_config.num_views;
  if (static_cast<int>(segs.maps.size()) != n)
    throw PipelineError("expected " + std::to_string(n) + " segmentation maps (one per view), got " +
                        std::to_string(segs.maps.size()));
}

std::string format_value(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

Tensor<float> encode_style(const TrainState& st, const Image& style_image) {
  if (!st.style_encoder) throw PipelineError("checkpoint has no style encoder");
  const int R = st.generator_config.resolution;
  if (image_height(style_image) != R || image_width(style_image) != R)
    throw PipelineError("style image is " + std::to_string(image_height(style_image)) + "x" +
                        std::to_string(image_width(style_image)) + ", expected " + std::to_string(R) + "x" +
                        std::to_string(R));
  NoGradGuard guard;
  const Tensor<float> codes = (*st.style_encoder)(Var<float>::constant(stack_images({style_image}))).value();
  const Index L = st.generator_config.num_layers(), D = st.generator_config.latent_dim;
  return split_codes(StyleCodes<float>{codes.reshaped({L, D}), st.generator_config.split_index}).second;
}

Tensor<float> sample_style(const GeneratorConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  return rng.normal_tensor<float>({config.num_layers() - config.split_index, config.latent_dim});
}

TextureMapSet synthesize_views(const TrainState& st, const SegmentationMapSet& segs, const Tensor<float>& w_sty,
                               std::uint64_t seed, const CodeObserver& observer) {
  if (!st.structure_encoder || !st.generator_ema) throw PipelineError("checkpoint has no structure encoder");
  const GeneratorConfig& g = st.generator_config;
  const Index n = g.split_index, L = g.num_layers(), D = g.latent_dim;
  if (w_sty.shape() != Shape{L - n, D})
    throw PipelineError("style codes have shape " + shape_string(w_sty.shape()) + ", expected " +
                        shape_string({L - n, D}));
  if (segs.maps.empty()) throw PipelineError("no segmentation maps");
  if (segs.num_classes != st.encoder_config.num_classes)
    throw PipelineError("segmentation maps have " + std::to_string(segs.num_classes) + " classes, the model " +
                        std::to_string(st.encoder_config.num_classes));
  try {
    segs.validate();
  } catch (const std::invalid_argument& e) {
    throw PipelineError(e.what());
  }
  for (const auto& m : segs.maps)
    if (m.rows() != g.resolution || m.cols() != g.resolution)
      throw PipelineError("segmentation map is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                          ", expected " + std::to_string(g.resolution) + "x" + std::to_string(g.resolution));
  NoGradGuard guard;
  const Tensor<float> structure =
      (*st.structure_encoder)(Var<float>::constant(structure_input(segs.maps, st.encoder_config))).value();
  if (structure.shape() != Shape{static_cast<Index>(segs.maps.size()), n, D})
    throw PipelineError("structure encoder returned " + shape_string(structure.shape()));
  TextureMapSet out;
  for (std::size_t i = 0; i < segs.maps.size(); ++i) {
    Tensor<float> w_struct({n, D});
    std::copy_n(structure.data() + static_cast<Index>(i) * n * D, n * D, w_struct.data());
    const StyleCodes<float> codes = merge_codes(w_struct, w_sty);
    if (observer) observer(static_cast<int>(i), codes);
    Rng noise(derive_seed(seed, i));
    out.maps.push_back(st.generator_ema->synthesize(codes, NoiseMode::random, &noise));
  }
  return out;
}

TextureMapSet conditional_generate(const TrainState& st, const SegmentationMapSet& segs, const Image& style_image,
                                   std::uint64_t seed, const CodeObserver& observer) {
  require_stage3(st);
  require_views(st, segs);
  return synthesize_views(st, segs, encode_style(st, style_image), seed, observer);
}

TextureMapSet unconditional_generate(const TrainState& st, const SegmentationMapSet& segs, std::uint64_t seed,
                                     const CodeObserver& observer) {
  require_stage3(st);
  require_views(st, segs);
  return synthesize_views(st, segs, sample_style(st.generator_config, derive_seed(seed, 1000)), seed, observer);
}

GenerationFiles write_generation(const Mesh& mesh, const UVAtlas& atlas, const TextureMapSet& textures,
                                 const fs::path& out_dir, int render_size) {
  fs::create_directories(out_dir);
  GenerationFiles files;
  for (std::size_t i = 0; i < textures.maps.size(); ++i) {
    files.textures.push_back(out_dir / ("texture_" + atlas.views.at(i).name + ".png"));
    write_png(files.textures.back(), textures.maps[i]);
  }
  files.mesh = export_textured_mesh(mesh, atlas, textures, out_dir);
  for (const auto& view : atlas.views) {
    files.renders.push_back(out_dir / ("render_" + view.name + ".png"));
    write_png(files.renders.back(), render_view(mesh, atlas, textures, view, render_size));
  }
  return files;
}

FeatureExtractor<float> resolve_extractor(const ExtractorSpec& spec, const FeatureExtractor<float>& builtin) {
  if (spec.source == "builtin") {
    if (!spec.id.empty() && spec.id != builtin.id())
      throw CheckpointError("builtin extractor is '" + builtin.id() + "', configured identifier is '" + spec.id + "'");
    return builtin;
  }
  return load_extractor<float>(spec.source, spec.id);
}

std::string EvalReport::format() const {
  std::ostringstream os;
  std::map<std::string, std::string> lines;
  for (const auto& [k, v] : values) lines[k] = format_value(v);
  lines["extractor_id"] = extractor_id;
  for (const auto& [k, v] : lines) os << k << " = " << v << '\n';
  return os.str();
}

EvalReport evaluate(const TrainState& st, const Dataset& data, GenerationMode mode,
                    const FeatureExtractor<float>& extractor, const Palette* palette, std::uint64_t seed) {
  require_stage3(st);
  if (data.size() < 2) throw PipelineError("evaluation needs at least two items, got " + std::to_string(data.size()));
  if (!data.has_labels()) throw PipelineError("evaluation needs segmentation labels");
  std::vector<Image> fakes;
  double miou_sum = 0, acc_sum = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    SegmentationMapSet segs{{data.labels[i]}, data.num_classes};
    const std::uint64_t item_seed = derive_seed(seed, i);
    const Tensor<float> w_sty = mode == GenerationMode::conditional
                                    ? encode_style(st, data.images[(i + 1) % data.size()])
                                    : sample_style(st.generator_config, derive_seed(item_seed, 1000));
    fakes.push_back(synthesize_views(st, segs, w_sty, item_seed).maps.front());
    if (palette) {
      const LabelImage pred = oracle_segment(fakes.back(), *palette);
      miou_sum += miou(pred, data.labels[i], data.num_classes);
      acc_sum += pixel_accuracy(pred, data.labels[i]);
    }
  }
  EvalReport report;
  report.extractor_id = extractor.id();
  const Eigen::MatrixXd real_f = embed_images(data.images, extractor), fake_f = embed_images(fakes, extractor);
  report.values["fid"] = fid(feature_stats(real_f), feature_stats(fake_f));
  report.values["kid"] = kid(real_f, fake_f);
  report.values["n_real"] = static_cast<double>(data.size());
  report.values["n_fake"] = static_cast<double>(fakes.size());
  if (palette) {
    report.values["miou"] = miou_sum / static_cast<double>(data.size());
    report.values["pixel_accuracy"] = acc_sum / static_cast<double>(data.size());
  }
  return report;
}

}  // namespace semtex
