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

#include <doctest.h>

#include "semtex/metrics.hpp"

#include <cmath>

using namespace semtex;

namespace {

FeatureStats univariate(double mu, double var) {
  FeatureStats s;
  s.mean = Eigen::VectorXd::Constant(1, mu);
  s.covariance = Eigen::MatrixXd::Constant(1, 1, var);
  s.count = 2;
  return s;
}

// Unbiased MMD^2 straight from its definition, one kernel call per pair.
double brute_kid(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const double d = static_cast<double>(x.cols());
  auto k = [d](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return std::pow(a.dot(b) / d + 1, 3); };
  const Index m = x.rows(), n = y.rows();
  double sxx = 0, syy = 0, sxy = 0;
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      if (i != j) sxx += k(x.row(i), x.row(j));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) syy += k(y.row(i), y.row(j));
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) sxy += k(x.row(i), y.row(j));
  return sxx / (m * (m - 1.0)) + syy / (n * (n - 1.0)) - 2 * sxy / (m * static_cast<double>(n));
}

LabelImage labels2x2(int a, int b, int c, int d) {
  LabelImage l(2, 2);
  l << a, b, c, d;
  return l;
}

}  // namespace

TEST_CASE("fid closed forms") {
  CHECK(std::abs(fid(univariate(0, 1), univariate(1, 1)) - 1.0) < 1e-9);
  CHECK(std::abs(fid(univariate(0, 1), univariate(0, 4)) - 1.0) < 1e-9);
  CHECK(std::abs(fid(univariate(0.3, 2.5), univariate(-1.2, 0.7)) -
                 (1.5 * 1.5 + 2.5 + 0.7 - 2 * std::sqrt(2.5 * 0.7))) < 1e-9);

  std::mt19937_64 gen(3);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd fa(200, 5), fb(150, 5);
  for (Index i = 0; i < fa.size(); ++i) fa.data()[i] = n01(gen);
  for (Index i = 0; i < fb.size(); ++i) fb.data()[i] = 0.5 * n01(gen) + 0.2;
  const auto a = feature_stats(fa), b = feature_stats(fb);
  CHECK(std::abs(fid(a, a)) <= 1e-6);
  CHECK(std::abs(fid(a, b) - fid(b, a)) < 1e-9);
  CHECK(fid(a, b) > 0);
  CHECK((a.covariance - a.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK_THROWS_AS(fid(a, univariate(0, 1)), std::invalid_argument);
  FeatureStats bad = univariate(0, -1);
  CHECK_THROWS_AS(fid(bad, univariate(0, 1)), std::runtime_error);
}

TEST_CASE("diagonal covariances match the per-axis closed form") {
  FeatureStats a, b;
  a.mean = Eigen::Vector3d(1, 2, 3);
  b.mean = Eigen::Vector3d(0, 2, 5);
  a.covariance = Eigen::Vector3d(1, 2, 3).asDiagonal();
  b.covariance = Eigen::Vector3d(4, 2, 0.5).asDiagonal();
  double expect = 1 + 0 + 4;
  for (int i = 0; i < 3; ++i) {
    const double sa = a.covariance(i, i), sb = b.covariance(i, i);
    expect += sa + sb - 2 * std::sqrt(sa * sb);
  }
  CHECK(std::abs(fid(a, b) - expect) < 1e-9);
}

TEST_CASE("kid matches brute force") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2, 1);
  CHECK(kid(z, z) == 0.0);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n01;
  for (const auto& [m, k, d] : std::vector<std::array<int, 3>>{{3, 3, 2}, {10, 7, 4}, {2, 10, 3}, {5, 5, 1}}) {
    Eigen::MatrixXd x(m, d), y(k, d);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = n01(gen);
    for (Index i = 0; i < y.size(); ++i) y.data()[i] = n01(gen) + 0.3;
    const double oracle = brute_kid(x, y);
    CHECK(std::abs(kid(x, y) - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
  }
  CHECK_THROWS_AS(kid(Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(3, 2)), std::invalid_argument);
}

TEST_CASE("kid of identically distributed extractor features is small") {
  const auto ex = make_metric_extractor<float>();
  auto draw = [](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Image> imgs;
    for (int i = 0; i < 1000; ++i) {
      Image img = rng.normal_tensor<float>({3, 16, 16}, 0.3f);
      img.array() += static_cast<float>(rng.uniform(-0.5, 0.5));
      imgs.push_back(std::move(img));
    }
    return imgs;
  };
  const double v = kid(embed_images(draw(1), ex), embed_images(draw(2), ex));
  CHECK(std::abs(v) < 0.01);
}

TEST_CASE("miou and pixel accuracy") {
  const auto pred = labels2x2(1, 1, 0, 0), gt = labels2x2(1, 0, 0, 0);
  CHECK(miou(pred, gt, 2) == doctest::Approx(7.0 / 12).epsilon(1e-15));
  CHECK(miou(gt, gt, 2) == 1.0);
  CHECK(miou(labels2x2(1, 1, 1, 1), labels2x2(2, 2, 2, 2), 3) == 0.0);
  CHECK(pixel_accuracy(gt, gt) == 1.0);
  CHECK(pixel_accuracy(pred, gt) == 0.75);
  CHECK(pixel_accuracy(labels2x2(0, 1, 1, 0), labels2x2(1, 0, 0, 1)) == 0.0);
  CHECK_THROWS_AS(miou(labels2x2(0, 3, 0, 0), gt, 3), std::out_of_range);
  CHECK_THROWS_AS(pixel_accuracy(LabelImage::Zero(3, 2), gt), std::invalid_argument);
}

TEST_CASE("oracle segmentation") {
  const Palette palette{{-1, -1, -1}, {1, 0, 0}, {0, 1, 0}};
  Image img({3, 2, 2});
  const LabelImage painted = labels2x2(0, 1, 2, 1);
  for (Index p = 0; p < 4; ++p)
    for (Index c = 0; c < 3; ++c) img[c * 4 + p] = palette[static_cast<std::size_t>(painted.data()[p])][c];
  CHECK((oracle_segment(img, palette) == painted).all());
  Image tie = Image::constant({3, 1, 1}, 0.5f);
  tie[2] = 0;
  CHECK(oracle_segment(tie, palette)(0, 0) == 1);
  CHECK_THROWS_AS(oracle_segment(img, Palette{{0, 0, 0}, {0, 0, 0}}), std::invalid_argument);
}

TEST_CASE("extract_stats") {
  const auto ex = make_metric_extractor<float>();
  Rng rng(9);
  std::vector<Image> imgs;
  for (int i = 0; i < 6; ++i) imgs.push_back(rng.normal_tensor<float>({3, 16, 16}));
  const auto s = extract_stats(imgs, ex);
  CHECK(s.count == 6);
  CHECK(s.mean.size() == 64);
  std::vector<Image> reversed(imgs.rbegin(), imgs.rend());
  const auto r = extract_stats(reversed, ex);
  CHECK((s.mean - r.mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s.covariance - r.covariance).cwiseAbs().maxCoeff() < 1e-12);
  const auto same = extract_stats(std::vector<Image>{imgs[0], imgs[0]}, ex);
  CHECK(same.covariance.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(extract_stats(std::vector<Image>{imgs[0]}, ex), std::invalid_argument);
}
