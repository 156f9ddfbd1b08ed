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

#include "semtex/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <string>

namespace semtex {
namespace {

constexpr double kNegativeEigenTolerance = 1e-6;

Eigen::VectorXd clamped_eigenvalues(const Eigen::VectorXd& values, const char* what) {
  Eigen::VectorXd out = values;
  for (Index i = 0; i < out.size(); ++i) {
    if (out[i] < -kNegativeEigenTolerance)
      throw std::runtime_error(std::string(what) + " has a negative eigenvalue " + std::to_string(out[i]));
    out[i] = std::max(out[i], 0.0);
  }
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = (m + m.transpose()) / 2;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd root = clamped_eigenvalues(es.eigenvalues(), "covariance").cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

void check_labels(const LabelImage& img, int num_classes) {
  if ((img < 0).any() || (img >= num_classes).any())
    throw std::out_of_range("label outside [0, " + std::to_string(num_classes) + ")");
}

void check_same_size(const LabelImage& a, const LabelImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("label images differ in size: " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
}

}  // namespace

FeatureStats feature_stats(const Eigen::MatrixXd& features) {
  const Index n = features.rows();
  if (n < 2) throw std::invalid_argument("feature statistics need at least 2 samples");
  FeatureStats s;
  s.count = n;
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.covariance = centered.transpose() * centered / static_cast<double>(n - 1);
  s.covariance = (s.covariance + s.covariance.transpose()) / 2;
  return s;
}

double fid(const FeatureStats& a, const FeatureStats& b) {
  if (a.mean.size() != b.mean.size())
    throw std::invalid_argument("feature dimensions differ: " + std::to_string(a.mean.size()) + " vs " +
                                std::to_string(b.mean.size()));
  const Eigen::MatrixXd root_a = psd_sqrt(a.covariance);
  const Eigen::MatrixXd inner = root_a * b.covariance * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((inner + inner.transpose()) / 2, Eigen::EigenvaluesOnly);
  const double tr_sqrt = clamped_eigenvalues(es.eigenvalues(), "covariance product").cwiseSqrt().sum();
  return (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2 * tr_sqrt;
}

double kid(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Index m = x.rows(), k = y.rows(), d = x.cols();
  if (m < 2 || k < 2) throw std::invalid_argument("KID needs at least 2 samples per set");
  if (y.cols() != d) throw std::invalid_argument("KID feature dimensions differ");
  auto kernel = [d](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return ((a * b.transpose()).array() / static_cast<double>(d) + 1).cube().matrix().eval();
  };
  const Eigen::MatrixXd kxx = kernel(x, x), kyy = kernel(y, y), kxy = kernel(x, y);
  const double sxx = (kxx.sum() - kxx.trace()) / static_cast<double>(m * (m - 1));
  const double syy = (kyy.sum() - kyy.trace()) / static_cast<double>(k * (k - 1));
  const double sxy = kxy.sum() / static_cast<double>(m * k);
  return sxx + syy - 2 * sxy;
}

double miou(const LabelImage& pred, const LabelImage& gt, int num_classes) {
  check_same_size(pred, gt);
  check_labels(pred, num_classes);
  check_labels(gt, num_classes);
  double total = 0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto p = pred == c, g = gt == c;
    const Index uni = (p || g).count();
    if (uni == 0) continue;
    total += static_cast<double>((p && g).count()) / static_cast<double>(uni);
    ++present;
  }
  return present == 0 ? 1.0 : total / present;
}

double pixel_accuracy(const LabelImage& pred, const LabelImage& gt) {
  check_same_size(pred, gt);
  return static_cast<double>((pred == gt).count()) / static_cast<double>(gt.size());
}

LabelImage oracle_segment(const Image& image, const Palette& palette) {
  if (palette.empty()) throw std::invalid_argument("empty palette");
  for (std::size_t i = 0; i < palette.size(); ++i)
    for (std::size_t j = i + 1; j < palette.size(); ++j)
      if (palette[i] == palette[j])
        throw std::invalid_argument("palette colours " + std::to_string(i) + " and " + std::to_string(j) +
                                    " are identical");
  const Index H = image.dim(1), W = image.dim(2), P = H * W;
  LabelImage out(H, W);
  for (Index p = 0; p < P; ++p) {
    const Eigen::Vector3f rgb(image[p], image[P + p], image[2 * P + p]);
    int best = 0;
    float best_d = (rgb - palette[0]).squaredNorm();
    for (std::size_t c = 1; c < palette.size(); ++c) {
      const float d = (rgb - palette[c]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    out(p / W, p % W) = best;
  }
  return out;
}

}  // namespace semtex
