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

// Reconstruction and adversarial objectives.
//
// Reconstruction (encoder training) is a weighted sum of a pixel term, a
// perceptual feature term and an embedding-similarity term. The perceptual
// and embedding networks are pluggable FeatureExtractor instances; the
// built-in ones are small convolutional nets with fixed random weights.

#pragma once

#include "semtex/core/layers.hpp"

#include <functional>
#include <string>
#include <vector>

namespace semtex {

/// Frozen convolutional feature extractor with an optional embedding head.
template <typename Scalar>
class FeatureExtractor {
 public:
  struct Stage {
    Index channels;
    Index stride;
  };

  /// `embedding_dim` > 0 adds global pooling + linear + unit normalization.
  /// `pool_to` > 0 instead flattens the last map average-pooled to pool_to^2 cells.
  FeatureExtractor(std::string id, std::vector<Stage> stages, std::uint64_t seed, Index embedding_dim = 0,
                   Index pool_to = 0)
      : id_(std::move(id)), stages_(stages), embedding_dim_(embedding_dim), pool_to_(pool_to) {
    Rng rng(seed);
    Index in = 3;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      convs_.emplace_back(params_, "conv" + std::to_string(i), in, stages[i].channels, 3, rng, stages[i].stride, true,
                          Scalar(1));
      in = stages[i].channels;
    }
    if (embedding_dim_ > 0) head_ = Dense<Scalar>(params_, "embed", in, embedding_dim_, rng);
    params_.set_requires_grad(false);
  }

  const std::string& id() const { return id_; }
  bool is_embedding() const { return embedding_dim_ > 0; }
  const std::vector<Stage>& stages() const { return stages_; }
  Index embedding_dim() const { return embedding_dim_; }
  Index pool_to() const { return pool_to_; }
  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }

  /// Activations after every stage.
  std::vector<Var<Scalar>> features(const Var<Scalar>& images) const {
    std::vector<Var<Scalar>> out;
    Var<Scalar> h = images;
    for (const auto& c : convs_) {
      h = leaky_relu(c(h), Scalar(0.2), std::sqrt(Scalar(2)));
      out.push_back(h);
    }
    return out;
  }

  /// Unit-norm embedding [N, d] (embedding variant).
  Var<Scalar> embed(const Var<Scalar>& images) const {
    if (!is_embedding()) throw std::logic_error("extractor " + id_ + " has no embedding head");
    const Var<Scalar> h = features(images).back();
    const Index N = h.dim(0), C = h.dim(1);
    const Var<Scalar> pooled = scale(sum_last(reshape(h, {N, C, h.dim(2) * h.dim(3)})),
                                     Scalar(1) / static_cast<Scalar>(h.dim(2) * h.dim(3)));
    return normalize_axis1(head_(pooled));
  }

  /// Flat descriptor [N, d] for distribution metrics.
  Var<Scalar> describe(const Var<Scalar>& images) const {
    if (is_embedding()) return embed(images);
    Var<Scalar> h = features(images).back();
    if (pool_to_ > 0) h = avg_pool(h, h.dim(2) / pool_to_);
    return reshape(h, {h.dim(0), h.numel() / h.dim(0)});
  }

 private:
  std::string id_;
  std::vector<Stage> stages_;
  Index embedding_dim_ = 0;
  Index pool_to_ = 0;
  ParamStore<Scalar> params_;
  std::vector<Conv<Scalar>> convs_;
  Dense<Scalar> head_;
};

/// Two-level perceptual feature extractor.
template <typename Scalar>
FeatureExtractor<Scalar> make_perceptual_extractor(std::uint64_t seed = 101) {
  return FeatureExtractor<Scalar>("toy-perceptual-" + std::to_string(seed), {{8, 1}, {16, 2}}, seed);
}

/// Unit-norm embedding extractor.
template <typename Scalar>
FeatureExtractor<Scalar> make_embedding_extractor(std::uint64_t seed = 202, Index dim = 32) {
  return FeatureExtractor<Scalar>("toy-embedding-" + std::to_string(seed), {{16, 2}, {32, 2}}, seed, dim);
}

/// Descriptor network for FID/KID: 16 channels pooled to a 2x2 grid (64 dims).
template <typename Scalar>
FeatureExtractor<Scalar> make_metric_extractor(std::uint64_t seed = 303) {
  return FeatureExtractor<Scalar>("toy-metric-" + std::to_string(seed), {{16, 2}, {16, 2}}, seed, 0, 2);
}

struct LossWeights {
  double pixel = 1.0;       // lambda_1
  double perceptual = 0.8;  // lambda_2
  double similarity = 0.5;  // lambda_3
};

namespace detail {
/// Per-sample Euclidean norm divided by the per-sample element count, batch mean.
template <typename Scalar>
Var<Scalar> mean_normalized_distance(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same(a.shape(), b.shape(), "distance");
  const Index N = a.dim(0), P = a.numel() / N;
  const Var<Scalar> per = sqrt(sum_last(square(reshape(a - b, {N, P}))));
  return mean(scale(per, Scalar(1) / static_cast<Scalar>(P)));
}
}  // namespace detail

/// Pixel term: ||I - t||_2 / (#elements), averaged over the batch.
template <typename Scalar>
Var<Scalar> l2_loss(const Var<Scalar>& image, const Var<Scalar>& target) {
  return detail::mean_normalized_distance(image, target);
}

/// Perceptual term: sum over feature levels of the distance between
/// channel-normalized activations.
template <typename Scalar>
Var<Scalar> lpips_loss(const Var<Scalar>& image, const Var<Scalar>& target, const FeatureExtractor<Scalar>& F) {
  const auto fa = F.features(image);
  const auto fb = F.features(target);
  Var<Scalar> total;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    const Var<Scalar> d = detail::mean_normalized_distance(normalize_axis1(fa[l], Scalar(1), Scalar(1e-10)),
                                                           normalize_axis1(fb[l], Scalar(1), Scalar(1e-10)));
    total = total.defined() ? total + d : d;
  }
  return total;
}

/// Embedding term: 1 - <M(I), M(t)>, averaged over the batch. For unit
/// vectors this is ||a - b||^2 / 2, the form evaluated here (exactly zero
/// for identical embeddings).
template <typename Scalar>
Var<Scalar> moco_loss(const Var<Scalar>& image, const Var<Scalar>& target, const FeatureExtractor<Scalar>& M) {
  const Var<Scalar> a = M.embed(image), b = M.embed(target);
  return scale(mean(sum_last(square(a - b))), Scalar(0.5));
}

/// 1 - <a, b> for unit embeddings, as ||a - b||^2 / 2.
template <typename Scalar>
Scalar embedding_distance(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& a,
                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& b) {
  return (a - b).squaredNorm() / Scalar(2);
}

template <typename Scalar>
struct ReconLoss {
  Var<Scalar> total;
  Scalar pixel = 0, perceptual = 0, similarity = 0;
};

/// lambda_1 * pixel + lambda_2 * perceptual + lambda_3 * similarity.
template <typename Scalar>
Var<Scalar> weighted_recon(const Var<Scalar>& pixel, const Var<Scalar>& perceptual, const Var<Scalar>& similarity,
                           const LossWeights& w) {
  return scale(pixel, static_cast<Scalar>(w.pixel)) + scale(perceptual, static_cast<Scalar>(w.perceptual)) +
         scale(similarity, static_cast<Scalar>(w.similarity));
}

template <typename Scalar>
ReconLoss<Scalar> recon_loss(const Var<Scalar>& image, const Var<Scalar>& target, const FeatureExtractor<Scalar>& F,
                             const FeatureExtractor<Scalar>& M, const LossWeights& w = {}) {
  const Var<Scalar> p = l2_loss(image, target);
  const Var<Scalar> f = lpips_loss(image, target, F);
  const Var<Scalar> m = moco_loss(image, target, M);
  return {weighted_recon(p, f, m, w), p.item(), f.item(), m.item()};
}

template <typename Scalar>
struct GanLosses {
  Var<Scalar> generator;
  Var<Scalar> discriminator;
};

/// Non-saturating logistic losses.
template <typename Scalar>
GanLosses<Scalar> gan_losses(const Var<Scalar>& d_real, const Var<Scalar>& d_fake) {
  return {mean(softplus(-d_fake)), mean(softplus(d_fake)) + mean(softplus(-d_real))};
}

template <typename Scalar>
using Critic = std::function<Var<Scalar>(const Var<Scalar>&)>;

/// (gamma / 2) * mean over the batch of ||grad_x d(x)||^2. The input
/// gradient is written to `input_grad` when given.
template <typename Scalar>
Scalar r1_penalty(const Critic<Scalar>& d, const Tensor<Scalar>& real, Scalar gamma,
                  Tensor<Scalar>* input_grad = nullptr) {
  Var<Scalar> x = Var<Scalar>::leaf(real, true);
  backward(sum(d(x)));
  const Tensor<Scalar>& g = x.grad();
  const Index N = real.dim(0);
  const Scalar sq = g.array().square().sum() / static_cast<Scalar>(N);
  if (input_grad) *input_grad = g;
  return gamma / Scalar(2) * sq;
}

/// Adds weight * d(r1)/d(theta) to the critic's parameter gradients and
/// returns the penalty. The mixed second derivative is the directional
/// difference of parameter gradients at x +- eps * g, with g = grad_x d.
template <typename Scalar>
Scalar accumulate_r1_gradient(const Critic<Scalar>& d, ParamStore<Scalar>& params, const Tensor<Scalar>& real,
                              Scalar gamma, Scalar weight, Scalar rel_step = Scalar(1e-2)) {
  Tensor<Scalar> g;
  params.set_requires_grad(false);
  const Scalar penalty = r1_penalty(d, real, gamma, &g);
  params.set_requires_grad(true);
  const Scalar rms = std::sqrt(g.array().square().mean());
  if (!(rms > Scalar(0))) return penalty;
  const Scalar eps = rel_step / rms;
  const Index N = real.dim(0);
  const Scalar coef = weight * gamma / static_cast<Scalar>(N) / (Scalar(2) * eps);
  const Tensor<Scalar> plus(real.shape(), real.array() + eps * g.array());
  const Tensor<Scalar> minus(real.shape(), real.array() - eps * g.array());
  backward(sum(d(Var<Scalar>::constant(plus))), coef);
  backward(sum(d(Var<Scalar>::constant(minus))), -coef);
  return penalty;
}

}  // namespace semtex
