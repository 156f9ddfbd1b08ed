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

// Distribution metrics (FID, KID) over extractor features and label-map
// agreement metrics (mIoU, pixel accuracy). All statistics are double.

#pragma once

#include "semtex/image.hpp"
#include "semtex/losses.hpp"

#include <Eigen/Core>

#include <vector>

namespace semtex {

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Index count = 0;
};

/// Sample mean and unbiased covariance of the rows of `features` (two-pass).
FeatureStats feature_stats(const Eigen::MatrixXd& features);

/// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
double fid(const FeatureStats& a, const FeatureStats& b);

/// Unbiased squared MMD with kernel k(x, y) = (x.y / d + 1)^3; rows are samples.
double kid(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

/// Mean IoU over classes present in either image.
double miou(const LabelImage& pred, const LabelImage& gt, int num_classes);

double pixel_accuracy(const LabelImage& pred, const LabelImage& gt);

using Palette = std::vector<Eigen::Vector3f>;

/// Nearest palette colour per pixel (ties to the lower class index).
LabelImage oracle_segment(const Image& image, const Palette& palette);

/// Extractor descriptors of `images`, one row per image.
template <typename Scalar>
Eigen::MatrixXd embed_images(const std::vector<Image>& images, const FeatureExtractor<Scalar>& extractor,
                             std::size_t batch = 64) {
  NoGradGuard guard;
  Eigen::MatrixXd out;
  for (std::size_t begin = 0; begin < images.size(); begin += batch) {
    const std::size_t end = std::min(images.size(), begin + batch);
    const std::vector<Image> chunk(images.begin() + static_cast<std::ptrdiff_t>(begin),
                                   images.begin() + static_cast<std::ptrdiff_t>(end));
    const Var<Scalar> d = extractor.describe(Var<Scalar>::constant(stack_images<Scalar>(chunk)));
    const Index n = d.dim(0), k = d.dim(1);
    if (out.size() == 0) out.resize(static_cast<Index>(images.size()), k);
    out.middleRows(static_cast<Index>(begin), n) = d.value().matrix(k, n).transpose().template cast<double>();
  }
  return out;
}

template <typename Scalar>
FeatureStats extract_stats(const std::vector<Image>& images, const FeatureExtractor<Scalar>& extractor) {
  if (images.size() < 2) throw std::invalid_argument("feature statistics need at least 2 images");
  return feature_stats(embed_images(images, extractor));
}

}  // namespace semtex
