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

#pragma once

#include "semtex/core/tensor.hpp"

#include <Eigen/Core>

#include <vector>

namespace semtex {

/// RGB image [3, H, W], values nominally in [-1, 1].
using Image = Tensor<float>;

/// Integer class-label image, rows = height.
using LabelImage = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index image_height(const Image& img) { return img.dim(1); }
inline Index image_width(const Image& img) { return img.dim(2); }

/// Collapses every non-background label to 1.
inline LabelImage make_silhouette(const LabelImage& seg) { return (seg > 0).cast<int>(); }

/// Stacks same-sized images into a batch [N, 3, H, W].
template <typename Scalar = float>
Tensor<Scalar> stack_images(const std::vector<Image>& images) {
  if (images.empty()) throw ShapeError("cannot stack an empty image list");
  const Shape s = images.front().shape();
  Tensor<Scalar> out({static_cast<Index>(images.size()), s[0], s[1], s[2]});
  const Index m = images.front().numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s) throw ShapeError("image size mismatch in batch");
    out.array().segment(static_cast<Index>(i) * m, m) = images[i].array().template cast<Scalar>();
  }
  return out;
}

/// Sample i of a batch [N, C, H, W] as [C, H, W].
template <typename Scalar>
Image batch_item(const Tensor<Scalar>& batch, Index i) {
  const Index m = batch.numel() / batch.dim(0);
  return Image({batch.dim(1), batch.dim(2), batch.dim(3)}, batch.array().segment(i * m, m).template cast<float>());
}

}  // namespace semtex
