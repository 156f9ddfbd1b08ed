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

// Style-based texture generator and its discriminator.
//
// The synthesis network starts from a learned 4x4 constant and runs one block
// per resolution level 4, 8, ..., R. Every block holds two modulated 3x3
// convolutions (the first one upsamples, except at 4x4) and a 1x1 RGB
// projection whose output is accumulated through skip connections. Block b
// consumes the per-layer codes w[2b] and w[2b+1], so the extended latent
// space has L = 2 (log2 R - 1) entries and layer i works at 4 * 2^(i/2).

#pragma once

#include "semtex/core/layers.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace semtex {

/// Number of per-layer codes consumed by a synthesis network of side `resolution`.
inline int num_style_layers(int resolution) {
  if (resolution < 8 || !std::has_single_bit(static_cast<unsigned>(resolution)))
    throw std::invalid_argument("resolution must be a power of two >= 8, got " + std::to_string(resolution));
  return 2 * (std::countr_zero(static_cast<unsigned>(resolution)) - 1);
}

/// Feature-map side length at which style layer `layer` operates.
inline int layer_resolution(int layer) { return 4 << (layer / 2); }

struct GeneratorConfig {
  int resolution = 32;
  int latent_dim = 512;
  int split_index = 4;
  int channel_base = 8192;
  int channel_max = 512;
  int mapping_layers = 8;
  int num_views = 6;

  int num_layers() const { return num_style_layers(resolution); }
  int channels_at(int res) const { return std::max(1, std::min(channel_max, channel_base / res)); }

  void validate() const {
    const int L = num_layers();
    if (split_index < 0 || split_index > L)
      throw std::invalid_argument("split index " + std::to_string(split_index) + " outside [0, " + std::to_string(L) +
                                  "]");
    if (latent_dim < 1 || channel_base < 1 || channel_max < 1 || mapping_layers < 1 || num_views < 1)
      throw std::invalid_argument("generator dimensions must be positive");
  }
};

/// Per-layer codes of one sample in the extended latent space.
template <typename Scalar>
struct StyleCodes {
  Tensor<Scalar> w_full;  // [L, D]
  int split_index = 0;

  Index num_layers() const { return w_full.dim(0); }
  Index latent_dim() const { return w_full.dim(1); }
};

/// Structure codes (first n rows) and style codes (remaining rows).
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_codes(const StyleCodes<Scalar>& w) {
  const Index L = w.num_layers(), D = w.latent_dim(), n = w.split_index;
  if (n < 0 || n > L) throw std::invalid_argument("split index outside [0, L]");
  Tensor<Scalar> structure({n, D}), style({L - n, D});
  std::copy_n(w.w_full.data(), n * D, structure.data());
  std::copy_n(w.w_full.data() + n * D, (L - n) * D, style.data());
  return {std::move(structure), std::move(style)};
}

template <typename Scalar>
StyleCodes<Scalar> merge_codes(const Tensor<Scalar>& structure, const Tensor<Scalar>& style) {
  if (structure.rank() != 2 || style.rank() != 2) throw ShapeError("codes must be [layers, D]");
  const Index D = style.dim(1);
  if (structure.dim(1) != D && structure.dim(0) != 0)
    throw ShapeError("latent dimension mismatch: " + std::to_string(structure.dim(1)) + " vs " + std::to_string(D));
  const Index n = structure.dim(0), rest = style.dim(0);
  Tensor<Scalar> full({n + rest, D});
  std::copy_n(structure.data(), n * D, full.data());
  std::copy_n(style.data(), rest * D, full.data() + n * D);
  return {std::move(full), static_cast<int>(n)};
}

enum class NoiseMode { fixed, random, zero };

template <typename Scalar>
class Generator {
 public:
  Generator(const GeneratorConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const Index D = config_.latent_dim;
    for (int i = 0; i < config_.mapping_layers; ++i)
      mapping_.emplace_back(params_, "mapping.fc" + std::to_string(i), D, D, rng, Scalar(0.01));

    const int blocks = config_.num_layers() / 2;
    const Index c4 = config_.channels_at(4);
    const_input_ = params_.add("synthesis.const", rng.normal_tensor<Scalar>({1, c4, 4, 4}));
    Index in = c4;
    for (int b = 0; b < blocks; ++b) {
      const int res = 4 << b;
      const Index out = config_.channels_at(res);
      const std::string p = "synthesis.b" + std::to_string(res);
      for (int k = 0; k < 2; ++k) {
        Layer layer;
        const bool up = b > 0 && k == 0;
        layer.conv = ModulatedConv<Scalar>(params_, p + ".conv" + std::to_string(k), D, k == 0 ? in : out, out, 3,
                                           rng, true, up);
        layer.bias = params_.add(p + ".conv" + std::to_string(k) + ".bias", Tensor<Scalar>::zeros({out}));
        layer.noise_strength = params_.add(p + ".conv" + std::to_string(k) + ".noise_strength",
                                           Tensor<Scalar>::zeros({1}));
        layer.resolution = res;
        fixed_noise_.push_back(rng.normal_tensor<Scalar>({1, 1, res, res}));
        layers_.push_back(std::move(layer));
      }
      ToRgb rgb;
      rgb.conv = ModulatedConv<Scalar>(params_, p + ".torgb", D, out, 3, 1, rng, false, false);
      rgb.bias = params_.add(p + ".torgb.bias", Tensor<Scalar>::zeros({3}));
      to_rgb_.push_back(std::move(rgb));
      in = out;
    }
    w_avg_ = Tensor<Scalar>::zeros({D});
  }

  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;
  Generator(Generator&&) noexcept = default;
  Generator& operator=(Generator&&) noexcept = default;

  const GeneratorConfig& config() const { return config_; }
  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }

  /// Running mean of mapped latents, tracked during adversarial training.
  const Tensor<Scalar>& w_avg() const { return w_avg_; }
  Tensor<Scalar>& w_avg() { return w_avg_; }
  const std::vector<Tensor<Scalar>>& fixed_noise() const { return fixed_noise_; }
  std::vector<Tensor<Scalar>>& fixed_noise() { return fixed_noise_; }

  /// z [N, D] -> w [N, D]. The input is projected onto the sphere of radius sqrt(D).
  Var<Scalar> map(const Var<Scalar>& z) const {
    if (z.value().rank() != 2 || z.dim(1) != config_.latent_dim)
      throw ShapeError("mapping input must be [N, " + std::to_string(config_.latent_dim) + "]");
    if (!z.value().array().isFinite().all()) throw std::domain_error("mapping input is not finite");
    Var<Scalar> x = normalize_axis1(z, std::sqrt(static_cast<Scalar>(config_.latent_dim)));
    for (const auto& fc : mapping_) x = leaky_relu(fc(x), Scalar(0.2), std::sqrt(Scalar(2)));
    return x;
  }

  /// w [N, D] -> [N, L, D] with the same code in every layer.
  Var<Scalar> broadcast(const Var<Scalar>& w) const {
    const Index N = w.dim(0), D = w.dim(1);
    Var<Scalar> one = reshape(w, {N, 1, D});
    return concat(std::vector<Var<Scalar>>(static_cast<std::size_t>(config_.num_layers()), one), 1);
  }

  /// ws [N, L, D] -> images [N, 3, R, R]. `trace`, when given, receives the
  /// feature map at the end of every block.
  Var<Scalar> synthesize(const Var<Scalar>& ws, NoiseMode mode, Rng* rng = nullptr,
                         std::vector<Tensor<Scalar>>* trace = nullptr) const {
    const Index L = config_.num_layers(), D = config_.latent_dim;
    if (ws.value().rank() != 3 || ws.dim(1) != L || ws.dim(2) != D)
      throw ShapeError("synthesis codes must be [N, " + std::to_string(L) + ", " + std::to_string(D) + "], got " +
                       shape_string(ws.shape()));
    if (mode == NoiseMode::random && !rng) throw std::invalid_argument("random noise requires an rng");
    const Index N = ws.dim(0);
    auto code = [&](Index i) { return reshape(slice(ws, 1, i, i + 1), {N, D}); };

    Var<Scalar> x = repeat_batch(const_input_, N);
    Var<Scalar> rgb;
    for (std::size_t b = 0; b < to_rgb_.size(); ++b) {
      for (std::size_t k = 0; k < 2; ++k) {
        const std::size_t li = 2 * b + k;
        const Layer& layer = layers_[li];
        x = layer.conv(x, code(static_cast<Index>(li)));
        if (mode != NoiseMode::zero) {
          const Index r = layer.resolution;
          const Tensor<Scalar> noise =
              mode == NoiseMode::fixed ? fixed_noise_[li] : rng->normal_tensor<Scalar>({N, 1, r, r});
          x = add_noise(x, noise, layer.noise_strength);
        }
        x = leaky_relu(add_bias(x, layer.bias), Scalar(0.2), std::sqrt(Scalar(2)));
      }
      if (trace) trace->push_back(x.value());
      Var<Scalar> y = add_bias(to_rgb_[b].conv(x, code(static_cast<Index>(2 * b + 1))), to_rgb_[b].bias);
      rgb = rgb.defined() ? upsample2x(rgb) + y : y;
    }
    return rgb;
  }

  /// Single-sample convenience: codes [L, D] -> image [3, R, R].
  Tensor<Scalar> synthesize(const StyleCodes<Scalar>& w, NoiseMode mode, Rng* rng = nullptr) const {
    NoGradGuard guard;
    const Index L = w.num_layers(), D = w.latent_dim();
    const Var<Scalar> ws = Var<Scalar>::constant(w.w_full.reshaped({1, L, D}));
    const Index R = config_.resolution;
    return synthesize(ws, mode, rng).value().reshaped({3, R, R});
  }

  /// Exponential moving average of the batch-mean mapped latent.
  void track_w_avg(const Tensor<Scalar>& w, Scalar beta) {
    const Index N = w.dim(0), D = w.dim(1);
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> batch_mean = w.matrix(D, N).rowwise().mean().array();
    w_avg_.array() = beta * w_avg_.array() + (Scalar(1) - beta) * batch_mean;
  }

 private:
  struct Layer {
    ModulatedConv<Scalar> conv;
    Var<Scalar> bias, noise_strength;
    Index resolution = 4;
  };
  struct ToRgb {
    ModulatedConv<Scalar> conv;
    Var<Scalar> bias;
  };

  GeneratorConfig config_;
  ParamStore<Scalar> params_;
  std::vector<Dense<Scalar>> mapping_;
  Var<Scalar> const_input_;
  std::vector<Layer> layers_;
  std::vector<ToRgb> to_rgb_;
  std::vector<Tensor<Scalar>> fixed_noise_;
  Tensor<Scalar> w_avg_;
};

/// Residual discriminator with a minibatch-stddev epilogue; returns one
/// unnormalized logit per image.
template <typename Scalar>
class Discriminator {
 public:
  Discriminator(const GeneratorConfig& config, std::uint64_t seed, Index mbstd_group = 4)
      : resolution_(config.resolution), mbstd_group_(mbstd_group) {
    config.validate();
    Rng rng(seed);
    const int R = config.resolution;
    from_rgb_ = Conv<Scalar>(params_, "from_rgb", 3, config.channels_at(R), 1, rng);
    for (int res = R; res > 4; res /= 2) {
      const Index in = config.channels_at(res), out = config.channels_at(res / 2);
      const std::string p = "b" + std::to_string(res);
      Block block;
      block.conv0 = Conv<Scalar>(params_, p + ".conv0", in, in, 3, rng);
      block.conv1 = Conv<Scalar>(params_, p + ".conv1", in, out, 3, rng);
      block.skip = Conv<Scalar>(params_, p + ".skip", in, out, 1, rng, 1, false);
      blocks_.push_back(std::move(block));
    }
    const Index c4 = config.channels_at(4);
    epilogue_conv_ = Conv<Scalar>(params_, "b4.conv", c4 + 1, c4, 3, rng);
    fc_ = Dense<Scalar>(params_, "b4.fc", c4 * 16, c4, rng);
    out_ = Dense<Scalar>(params_, "b4.out", c4, 1, rng);
  }

  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }

  /// images [N, 3, R, R] -> logits [N].
  Var<Scalar> operator()(const Var<Scalar>& images) const {
    if (images.value().rank() != 4 || images.dim(1) != 3 || images.dim(2) != resolution_ ||
        images.dim(3) != resolution_)
      throw ShapeError("discriminator expects [N, 3, " + std::to_string(resolution_) + ", " +
                       std::to_string(resolution_) + "], got " + shape_string(images.shape()));
    const Scalar gain = std::sqrt(Scalar(2));
    const Index N = images.dim(0);
    Var<Scalar> x = leaky_relu(from_rgb_(images), Scalar(0.2), gain);
    for (const auto& b : blocks_) {
      Var<Scalar> skip = b.skip(avg_pool(x, 2));
      Var<Scalar> h = leaky_relu(b.conv0(x), Scalar(0.2), gain);
      h = leaky_relu(b.conv1(avg_pool(h, 2)), Scalar(0.2), gain);
      x = scale(h + skip, Scalar(1) / gain);
    }
    x = minibatch_stddev(x, mbstd_group_);
    x = leaky_relu(epilogue_conv_(x), Scalar(0.2), gain);
    x = leaky_relu(fc_(reshape(x, {N, x.numel() / N})), Scalar(0.2), gain);
    return reshape(out_(x), {N});
  }

 private:
  struct Block {
    Conv<Scalar> conv0, conv1, skip;
  };

  int resolution_;
  Index mbstd_group_;
  ParamStore<Scalar> params_;
  Conv<Scalar> from_rgb_;
  std::vector<Block> blocks_;
  Conv<Scalar> epilogue_conv_;
  Dense<Scalar> fc_, out_;
};

}  // namespace semtex
