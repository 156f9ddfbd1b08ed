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

// Image -> per-layer code encoders.
//
// StyleEncoder is a compact residual feature pyramid (coarse 4x4, medium 8x8,
// fine 16x16 levels) with one map-to-vector head per generator layer.
// CoarseToFineEncoder injects the segmentation, resized to each layer's
// working resolution, before that layer's head and carries the running
// feature map from layer to layer. PyramidStructureEncoder is the plain
// pyramid backbone applied to the segmentation, kept for comparison.
//
// All encoders add the generator's mean latent to their head outputs, so a
// freshly initialized encoder starts near the centre of the latent space.

#pragma once

#include "semtex/generator.hpp"
#include "semtex/image.hpp"

#include <memory>
#include <optional>

namespace semtex {

enum class StructureEncoderKind { coarse_to_fine, pyramid_baseline };
enum class StructureInputKind { segmentation, silhouette };

struct EncoderConfig {
  int input_resolution = 32;
  int latent_dim = 512;
  int split_index = 4;
  int num_classes = 4;
  int channels = 32;
  StructureEncoderKind structure_encoder_kind = StructureEncoderKind::coarse_to_fine;
  StructureInputKind structure_input_kind = StructureInputKind::segmentation;

  int num_layers() const { return num_style_layers(input_resolution); }
  /// Channels of the one-hot structure input.
  int structure_channels() const {
    return structure_input_kind == StructureInputKind::silhouette ? 2 : num_classes;
  }

  static EncoderConfig matching(const GeneratorConfig& g, int num_classes, int channels = 32) {
    EncoderConfig e;
    e.input_resolution = g.resolution;
    e.latent_dim = g.latent_dim;
    e.split_index = g.split_index;
    e.num_classes = num_classes;
    e.channels = channels;
    return e;
  }

  void validate() const {
    if (split_index < 0 || split_index > num_layers()) throw std::invalid_argument("split index outside [0, L]");
    if (num_classes < 2) throw std::invalid_argument("at least two classes required");
    if (channels < 1 || latent_dim < 1) throw std::invalid_argument("encoder widths must be positive");
  }
};

/// One-hot encoding of a label image: [C, H, W], channel c = indicator of label c.
template <typename Scalar>
Tensor<Scalar> onehot(const LabelImage& seg, int num_classes) {
  const Index H = seg.rows(), W = seg.cols();
  Tensor<Scalar> out({num_classes, H, W});
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      const int c = seg(y, x);
      if (c < 0 || c >= num_classes)
        throw std::out_of_range("label " + std::to_string(c) + " outside [0, " + std::to_string(num_classes) + ")");
      out[(c * H + y) * W + x] = Scalar(1);
    }
  return out;
}

/// Batched one-hot [N, C, H, W].
template <typename Scalar>
Tensor<Scalar> onehot_batch(const std::vector<LabelImage>& segs, int num_classes) {
  if (segs.empty()) throw ShapeError("empty segmentation batch");
  const Index H = segs.front().rows(), W = segs.front().cols(), m = num_classes * H * W;
  Tensor<Scalar> out({static_cast<Index>(segs.size()), num_classes, H, W});
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].rows() != H || segs[i].cols() != W) throw ShapeError("segmentation size mismatch in batch");
    out.array().segment(static_cast<Index>(i) * m, m) = onehot<Scalar>(segs[i], num_classes).array();
  }
  return out;
}

/// Arg-max over channels of a [C, H, W] array.
template <typename Scalar>
LabelImage argmax_channels(const Tensor<Scalar>& x) {
  const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
  LabelImage out(H, W);
  for (Index y = 0; y < H; ++y)
    for (Index xx = 0; xx < W; ++xx) {
      int best = 0;
      for (Index c = 1; c < C; ++c)
        if (x[(c * H + y) * W + xx] > x[(best * H + y) * W + xx]) best = static_cast<int>(c);
      out(y, xx) = best;
    }
  return out;
}

/// Feature map [N, c, r, r] -> code [N, D]: log2(r) stride-2 convs down to
/// 1x1, then a linear map.
template <typename Scalar>
class MapToStyle {
 public:
  MapToStyle() = default;
  MapToStyle(ParamStore<Scalar>& store, const std::string& name, Index channels, int resolution, Index latent_dim,
             Rng& rng) {
    for (int r = resolution, k = 0; r > 1; r /= 2, ++k)
      convs_.emplace_back(store, name + ".down" + std::to_string(k), channels, channels, 3, rng, 2);
    linear_ = Dense<Scalar>(store, name + ".linear", channels, latent_dim, rng, Scalar(1), Scalar(0), Scalar(0.1));
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    Var<Scalar> h = x;
    for (const auto& c : convs_) h = leaky_relu(c(h), Scalar(0.2), std::sqrt(Scalar(2)));
    return linear_(reshape(h, {h.dim(0), h.dim(1)}));
  }

 private:
  std::vector<Conv<Scalar>> convs_;
  Dense<Scalar> linear_;
};

namespace detail {

/// Stacks per-layer codes [N, D] into [N, k, D] and adds the mean latent.
template <typename Scalar>
Var<Scalar> assemble_codes(const std::vector<Var<Scalar>>& heads, const Tensor<Scalar>& w_avg, Index N, Index D) {
  std::vector<Var<Scalar>> rows;
  for (const auto& h : heads) rows.push_back(reshape(h, {N, 1, D}));
  const Index k = static_cast<Index>(heads.size());
  if (k == 0) return Var<Scalar>::constant(Tensor<Scalar>({N, 0, D}));
  Var<Scalar> codes = reshape(concat(rows, 1), {N * k, D});
  return reshape(add_bias(codes, Var<Scalar>::constant(w_avg)), {N, k, D});
}

/// Residual feature pyramid shared by the style encoder and the baseline
/// structure encoder.
template <typename Scalar>
class PyramidBackbone {
 public:
  PyramidBackbone() = default;
  PyramidBackbone(ParamStore<Scalar>& store, Index in_channels, int resolution, Index channels, Rng& rng)
      : resolution_(resolution) {
    stem_ = Conv<Scalar>(store, "stem", in_channels, channels, 3, rng);
    for (int r = resolution; r > 4; r /= 2) {
      const std::string p = "down" + std::to_string(r);
      Stage s;
      s.conv0 = Conv<Scalar>(store, p + ".conv0", channels, channels, 3, rng);
      s.conv1 = Conv<Scalar>(store, p + ".conv1", channels, channels, 3, rng);
      s.skip = Conv<Scalar>(store, p + ".skip", channels, channels, 1, rng, 1, false);
      stages_.push_back(std::move(s));
    }
    if (resolution >= 8) lateral8_ = Conv<Scalar>(store, "lateral8", channels, channels, 1, rng);
    if (resolution >= 16) lateral16_ = Conv<Scalar>(store, "lateral16", channels, channels, 1, rng);
  }

  /// Pyramid levels {4x4, 8x8, 16x16} (the 16x16 level only when R >= 16).
  std::vector<Var<Scalar>> operator()(const Var<Scalar>& x) const {
    const Scalar gain = std::sqrt(Scalar(2));
    Var<Scalar> h = leaky_relu(stem_(x), Scalar(0.2), gain);
    Var<Scalar> f16, f8;
    int r = resolution_;
    if (r == 16) f16 = h;
    if (r == 8) f8 = h;
    for (const auto& s : stages_) {
      Var<Scalar> skip = s.skip(avg_pool(h, 2));
      Var<Scalar> m = leaky_relu(s.conv0(h), Scalar(0.2), gain);
      m = leaky_relu(s.conv1(avg_pool(m, 2)), Scalar(0.2), gain);
      h = scale(m + skip, Scalar(1) / gain);
      r /= 2;
      if (r == 16) f16 = h;
      if (r == 8) f8 = h;
    }
    std::vector<Var<Scalar>> levels{h};
    if (f8.defined()) levels.push_back(lateral8_(f8) + upsample2x(levels.back()));
    if (f16.defined()) levels.push_back(lateral16_(f16) + upsample2x(levels.back()));
    return levels;
  }

  /// Pyramid level index read by style layer i.
  static std::size_t level_for_layer(int layer) {
    const int r = layer_resolution(layer);
    return r <= 4 ? 0 : r == 8 ? 1 : 2;
  }
  static int level_resolution(std::size_t level) { return 4 << level; }

 private:
  struct Stage {
    Conv<Scalar> conv0, conv1, skip;
  };
  int resolution_ = 32;
  Conv<Scalar> stem_;
  std::vector<Stage> stages_;
  Conv<Scalar> lateral8_, lateral16_;
};

}  // namespace detail

/// Image [N, 3, R, R] -> codes for all L generator layers [N, L, D].
template <typename Scalar>
class StyleEncoder {
 public:
  StyleEncoder(const EncoderConfig& config, std::uint64_t seed, Index in_channels = 3, int num_heads = -1)
      : config_(config) {
    config_.validate();
    Rng rng(seed);
    backbone_ = detail::PyramidBackbone<Scalar>(params_, in_channels, config_.input_resolution, config_.channels, rng);
    const int heads = num_heads < 0 ? config_.num_layers() : num_heads;
    for (int i = 0; i < heads; ++i) {
      const auto level = detail::PyramidBackbone<Scalar>::level_for_layer(i);
      heads_.emplace_back(params_, "head" + std::to_string(i), config_.channels,
                          detail::PyramidBackbone<Scalar>::level_resolution(level), config_.latent_dim, rng);
    }
    w_avg_ = Tensor<Scalar>::zeros({config_.latent_dim});
    in_channels_ = in_channels;
  }

  const EncoderConfig& config() const { return config_; }
  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }
  Tensor<Scalar>& w_avg() { return w_avg_; }
  const Tensor<Scalar>& w_avg() const { return w_avg_; }
  Index num_heads() const { return static_cast<Index>(heads_.size()); }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    const Index R = config_.input_resolution;
    if (x.value().rank() != 4 || x.dim(1) != in_channels_ || x.dim(2) != R || x.dim(3) != R)
      throw ShapeError("encoder expects [N, " + std::to_string(in_channels_) + ", " + std::to_string(R) + ", " +
                       std::to_string(R) + "], got " + shape_string(x.shape()));
    const auto levels = backbone_(x);
    std::vector<Var<Scalar>> out;
    for (std::size_t i = 0; i < heads_.size(); ++i)
      out.push_back(heads_[i](levels.at(detail::PyramidBackbone<Scalar>::level_for_layer(static_cast<int>(i)))));
    return detail::assemble_codes(out, w_avg_, x.dim(0), config_.latent_dim);
  }

 private:
  EncoderConfig config_;
  ParamStore<Scalar> params_;
  detail::PyramidBackbone<Scalar> backbone_;
  std::vector<MapToStyle<Scalar>> heads_;
  Tensor<Scalar> w_avg_;
  Index in_channels_ = 3;
};

/// Common interface of the two structure encoders: one-hot [N, C, R, R] -> [N, n, D].
template <typename Scalar>
class StructureEncoder {
 public:
  virtual ~StructureEncoder() = default;
  virtual Var<Scalar> operator()(const Var<Scalar>& seg_onehot) const = 0;
  virtual ParamStore<Scalar>& params() = 0;
  virtual const ParamStore<Scalar>& params() const = 0;
  virtual Tensor<Scalar>& w_avg() = 0;
  virtual const EncoderConfig& config() const = 0;

 protected:
  void check_input(const Var<Scalar>& x) const {
    const auto& c = config();
    const Index R = c.input_resolution;
    if (x.value().rank() != 4 || x.dim(1) != c.structure_channels() || x.dim(2) != R || x.dim(3) != R)
      throw ShapeError("structure encoder expects [N, " + std::to_string(c.structure_channels()) + ", " +
                       std::to_string(R) + ", " + std::to_string(R) + "], got " + shape_string(x.shape()));
  }
};

template <typename Scalar>
class CoarseToFineEncoder final : public StructureEncoder<Scalar> {
 public:
  CoarseToFineEncoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const Index C = config_.structure_channels(), ch = config_.channels;
    for (int i = 0; i < config_.split_index; ++i) {
      const std::string p = "layer" + std::to_string(i);
      Layer layer;
      layer.resolution = layer_resolution(i);
      layer.inject0 = Conv<Scalar>(params_, p + ".inject0", C, ch, 3, rng);
      layer.inject1 = Conv<Scalar>(params_, p + ".inject1", ch, ch, 3, rng);
      layer.head = MapToStyle<Scalar>(params_, p + ".head", ch, layer.resolution, config_.latent_dim, rng);
      layers_.push_back(std::move(layer));
    }
    w_avg_ = Tensor<Scalar>::zeros({config_.latent_dim});
  }

  Var<Scalar> operator()(const Var<Scalar>& seg) const override { return encode(seg, -1); }

  /// `zero_layer` >= 0 suppresses the segmentation injected at that layer.
  Var<Scalar> encode(const Var<Scalar>& seg, int zero_layer) const {
    this->check_input(seg);
    const Scalar gain = std::sqrt(Scalar(2));
    std::vector<Var<Scalar>> heads;
    Var<Scalar> carry;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = layers_[i];
      Var<Scalar> s = resize_pow2(seg, l.resolution);
      if (static_cast<int>(i) == zero_layer) s = Var<Scalar>::constant(Tensor<Scalar>(s.shape()));
      Var<Scalar> f = leaky_relu(l.inject0(s), Scalar(0.2), gain);
      f = leaky_relu(l.inject1(f), Scalar(0.2), gain);
      carry = carry.defined() ? f + resize_pow2(carry, l.resolution) : f;
      heads.push_back(l.head(carry));
    }
    return detail::assemble_codes(heads, w_avg_, seg.dim(0), config_.latent_dim);
  }

  ParamStore<Scalar>& params() override { return params_; }
  const ParamStore<Scalar>& params() const override { return params_; }
  Tensor<Scalar>& w_avg() override { return w_avg_; }
  const EncoderConfig& config() const override { return config_; }

 private:
  struct Layer {
    int resolution = 4;
    Conv<Scalar> inject0, inject1;
    MapToStyle<Scalar> head;
  };
  EncoderConfig config_;
  ParamStore<Scalar> params_;
  std::vector<Layer> layers_;
  Tensor<Scalar> w_avg_;
};

template <typename Scalar>
class PyramidStructureEncoder final : public StructureEncoder<Scalar> {
 public:
  PyramidStructureEncoder(const EncoderConfig& config, std::uint64_t seed)
      : inner_(config, seed, config.structure_channels(), config.split_index) {}

  Var<Scalar> operator()(const Var<Scalar>& seg) const override {
    this->check_input(seg);
    return inner_(seg);
  }
  ParamStore<Scalar>& params() override { return inner_.params(); }
  const ParamStore<Scalar>& params() const override { return inner_.params(); }
  Tensor<Scalar>& w_avg() override { return inner_.w_avg(); }
  const EncoderConfig& config() const override { return inner_.config(); }

 private:
  StyleEncoder<Scalar> inner_;
};

template <typename Scalar>
std::unique_ptr<StructureEncoder<Scalar>> make_structure_encoder(const EncoderConfig& config, std::uint64_t seed) {
  if (config.structure_encoder_kind == StructureEncoderKind::pyramid_baseline)
    return std::make_unique<PyramidStructureEncoder<Scalar>>(config, seed);
  return std::make_unique<CoarseToFineEncoder<Scalar>>(config, seed);
}

}  // namespace semtex
