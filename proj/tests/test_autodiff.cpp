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

#include "gradcheck.hpp"
#include "semtex/core/adam.hpp"

using namespace semtex;
using semtex::testing::max_grad_error;

namespace {

Vard random_leaf(Rng& rng, Shape shape) { return Vard::leaf(rng.normal_tensor<double>(std::move(shape)), true); }

// Contract every op output with a fixed random tensor so all output
// entries contribute to the checked gradient.
Vard contract(const Vard& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(y * Vard::constant(rng.normal_tensor<double>(y.shape())));
}

}  // namespace

TEST_CASE("elementwise and reduction gradients match central differences") {
  Rng rng(1);
  auto a = random_leaf(rng, {2, 3, 4});
  auto b = random_leaf(rng, {2, 3, 4});
  auto pos = Vard::leaf(Tensord({2, 3}, (rng.normal_tensor<double>({2, 3}).array().abs() + 0.5)), true);
  CHECK(max_grad_error([&] { return contract(a + b * a - scale(b, 3.0)); }, {a, b}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(square(a)); }, {a}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(sqrt(pos)); }, {pos}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(rsqrt(pos)); }, {pos}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(softplus(a)); }, {a}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(leaky_relu(a, 0.2, 1.4)); }, {a}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(sum_last(a)); }, {a}) < 1e-7);
  CHECK(max_grad_error([&] { return mean(a * a); }, {a}) < 1e-7);
}

TEST_CASE("layout op gradients") {
  Rng rng(2);
  auto a = random_leaf(rng, {2, 3, 4});
  auto b = random_leaf(rng, {2, 2, 4});
  auto one = random_leaf(rng, {1, 3, 2});
  CHECK(max_grad_error([&] { return contract(slice(a, 1, 1, 3)); }, {a}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(concat<double>({a, b, a}, 1)); }, {a, b}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(repeat_batch(one, 3)); }, {one}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(reshape(a, {6, 4})); }, {a}) < 1e-7);

  auto out = concat<double>({a, b}, 1);
  CHECK(out.shape() == Shape{2, 5, 4});
  CHECK(slice(out, 1, 0, 3).value() == a.value());
  CHECK(slice(out, 1, 3, 5).value() == b.value());
}

TEST_CASE("linear algebra and broadcast gradients") {
  Rng rng(3);
  auto a = random_leaf(rng, {3, 5});
  auto b = random_leaf(rng, {4, 5});
  auto x = random_leaf(rng, {2, 3, 2, 2});
  auto bias = random_leaf(rng, {3});
  auto s = random_leaf(rng, {2, 3});
  CHECK(max_grad_error([&] { return contract(matmul_nt(a, b)); }, {a, b}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(add_bias(x, bias)); }, {x, bias}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(scale_channels(x, s)); }, {x, s}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(normalize_axis1(x, 2.0, 1e-3)); }, {x}) < 1e-6);
  CHECK(max_grad_error([&] { return contract(normalize_axis1(a, 1.0)); }, {a}) < 1e-6);

  // matmul_nt value against Eigen directly
  Eigen::MatrixXd am(3, 5), bm(4, 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) am(i, j) = a.value()[i * 5 + j];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) bm(i, j) = b.value()[i * 5 + j];
  Eigen::MatrixXd ref = am * bm.transpose();
  auto c = matmul_nt(a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) CHECK(c.value()[i * 4 + j] == doctest::Approx(ref(i, j)));
}

TEST_CASE("convolution matches a direct loop and its gradients") {
  Rng rng(4);
  for (auto [k, stride, pad] : std::vector<std::array<Index, 3>>{{3, 1, 1}, {3, 2, 1}, {1, 1, 0}, {2, 2, 0}}) {
    auto x = random_leaf(rng, {2, 3, 6, 6});
    auto w = random_leaf(rng, {4, 3, k, k});
    auto y = conv2d(x, w, stride, pad);
    const Index Ho = y.dim(2), Wo = y.dim(3);
    for (Index n = 0; n < 2; ++n)
      for (Index o = 0; o < 4; ++o)
        for (Index oy = 0; oy < Ho; ++oy)
          for (Index ox = 0; ox < Wo; ++ox) {
            double acc = 0;
            for (Index c = 0; c < 3; ++c)
              for (Index ky = 0; ky < k; ++ky)
                for (Index kx = 0; kx < k; ++kx) {
                  const Index iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                  if (iy < 0 || iy >= 6 || ix < 0 || ix >= 6) continue;
                  acc += x.value()[((n * 3 + c) * 6 + iy) * 6 + ix] * w.value()[((o * 3 + c) * k + ky) * k + kx];
                }
            REQUIRE(y.value()[((n * 4 + o) * Ho + oy) * Wo + ox] == doctest::Approx(acc).epsilon(1e-12));
          }
    CHECK(max_grad_error([&] { return contract(conv2d(x, w, stride, pad)); }, {x, w}) < 1e-7);
  }
}

TEST_CASE("resampling, noise, stddev and augmentation gradients") {
  Rng rng(5);
  auto x = random_leaf(rng, {4, 2, 4, 4});
  auto strength = random_leaf(rng, {1});
  Tensord noise = rng.normal_tensor<double>({4, 1, 4, 4});
  Tensord shared = rng.normal_tensor<double>({1, 1, 4, 4});
  CHECK(max_grad_error([&] { return contract(upsample2x(x)); }, {x}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(avg_pool(x, 2)); }, {x}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(add_noise(x, noise, strength)); }, {x, strength}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(add_noise(x, shared, strength)); }, {x, strength}) < 1e-7);
  CHECK(max_grad_error([&] { return contract(minibatch_stddev(x, 2)); }, {x}) < 1e-6);
  CHECK(max_grad_error([&] { return contract(minibatch_stddev(x, 4)); }, {x}) < 1e-6);
  std::vector<AugmentParams> params{{true, 1, -2, 0.1}, {false, 0, 0, 0.0}, {false, -3, 1, -0.2}, {true, 0, 0, 0.0}};
  CHECK(max_grad_error([&] { return contract(augment(x, params)); }, {x}) < 1e-7);

  auto flipped = augment(x, {{true, 0, 0, 0.0}, {true, 0, 0, 0.0}, {true, 0, 0, 0.0}, {true, 0, 0, 0.0}});
  CHECK(flipped.value()[3] == x.value()[0]);
  auto up = upsample2x(x);
  CHECK(avg_pool(up, 2).value() == x.value());
}

TEST_CASE("no-grad mode records nothing") {
  Rng rng(6);
  auto a = random_leaf(rng, {3});
  {
    NoGradGuard guard;
    auto y = square(a);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(square(a).requires_grad());
}

TEST_CASE("adam minimizes a quadratic") {
  Rng rng(7);
  ParamStore<double> store;
  auto p = store.add("p", rng.normal_tensor<double>({5}));
  Adam<double> opt(store, {0.05, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 500; ++i) {
    store.zero_grad();
    backward(sum(square(add_scalar(p, -1.0))));
    opt.step();
  }
  CHECK((p.value().array() - 1.0).abs().maxCoeff() < 1e-2);
}
