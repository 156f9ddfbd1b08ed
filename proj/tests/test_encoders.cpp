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

#include "semtex/encoders.hpp"

using namespace semtex;

namespace {

EncoderConfig small_config(int n = 6) {
  EncoderConfig c;
  c.input_resolution = 32;
  c.latent_dim = 16;
  c.split_index = n;
  c.num_classes = 4;
  c.channels = 8;
  return c;
}

LabelImage blocky_seg(int r, bool with_window = true) {
  LabelImage s = LabelImage::Zero(r, r);
  s.block(r / 4, r / 8, r / 2, 3 * r / 4).setConstant(1);
  if (with_window) s.block(r / 4 + 2, r / 4, r / 8, r / 4).setConstant(2);
  s.block(3 * r / 4 - 2, r / 4, 3, 3).setConstant(3);
  return s;
}

double max_abs_diff(const Tensorf& a, const Tensorf& b) { return (a.array() - b.array()).abs().maxCoeff(); }

}  // namespace

TEST_CASE("onehot and argmax") {
  LabelImage s(2, 2);
  s << 0, 1, 1, 0;
  const Tensorf o = onehot<float>(s, 2);
  for (Index p = 0; p < 4; ++p) CHECK(o[p] + o[4 + p] == 1.0f);
  CHECK((argmax_channels(o) == s).all());
  const Tensorf bg = onehot<float>(LabelImage::Zero(3, 3), 3);
  CHECK(bg.array().head(9).minCoeff() == 1.0f);
  LabelImage bad = LabelImage::Constant(1, 1, 5);
  CHECK_THROWS_AS(onehot<float>(bad, 3), std::out_of_range);
  CHECK((make_silhouette(blocky_seg(16)) <= 1).all());
}

TEST_CASE("style encoder shapes and determinism") {
  const auto cfg = small_config();
  StyleEncoder<float> enc(cfg, 1);
  Rng rng(2);
  const Varf x = Varf::constant(rng.normal_tensor<float>({2, 3, 32, 32}, 0.5f));
  const Varf a = enc(x), b = enc(x);
  CHECK(a.shape() == Shape{2, 8, 16});
  CHECK(a.value() == b.value());
  CHECK_THROWS_AS(enc(Varf::constant(Tensorf({1, 3, 16, 16}))), ShapeError);
}

TEST_CASE("coarse-to-fine structure encoder") {
  const auto cfg = small_config(6);
  CoarseToFineEncoder<float> enc(cfg, 3);
  const LabelImage s = blocky_seg(32);
  const Varf x = Varf::constant(onehot_batch<float>({s}, 4));
  const Varf w = enc(x);
  CHECK(w.shape() == Shape{1, 6, 16});
  CHECK(enc(x).value() == w.value());

  SUBCASE("every layer reads the segmentation") {
    for (int layer = 0; layer < 6; ++layer) CHECK(max_abs_diff(enc.encode(x, layer).value(), w.value()) > 0);
  }
  SUBCASE("small part changes move the codes") {
    const Varf y = Varf::constant(onehot_batch<float>({blocky_seg(32, false)}, 4));
    CHECK(max_abs_diff(enc(y).value(), w.value()) > 0);
  }
  SUBCASE("wrong channel count is rejected") {
    CHECK_THROWS_AS(enc(Varf::constant(onehot_batch<float>({s}, 5))), ShapeError);
  }
  SUBCASE("channel permutation equivariance") {
    const std::vector<int> perm{2, 0, 3, 1};
    LabelImage ps = s;
    for (Index i = 0; i < ps.size(); ++i) ps.data()[i] = perm[static_cast<std::size_t>(s.data()[i])];
    CoarseToFineEncoder<float> permuted(cfg, 3);
    for (const auto& e : permuted.params().entries()) {
      if (e.name.find("inject0.weight") == std::string::npos) continue;
      Varf param = e.var;
      Tensorf& v = param.mutable_value();
      const Tensorf orig = v;
      const Index O = v.dim(0), C = v.dim(1), K = v.dim(2) * v.dim(3);
      for (Index o = 0; o < O; ++o)
        for (Index c = 0; c < C; ++c)
          for (Index k = 0; k < K; ++k) v[(o * C + perm[static_cast<std::size_t>(c)]) * K + k] = orig[(o * C + c) * K + k];
    }
    const Varf px = Varf::constant(onehot_batch<float>({ps}, 4));
    CHECK(max_abs_diff(permuted(px).value(), w.value()) < 1e-5);
  }
}

TEST_CASE("pyramid baseline and silhouette input") {
  auto cfg = small_config(6);
  cfg.structure_encoder_kind = StructureEncoderKind::pyramid_baseline;
  const auto pyr = make_structure_encoder<float>(cfg, 4);
  const Varf x = Varf::constant(onehot_batch<float>({blocky_seg(32)}, 4));
  const Varf a = (*pyr)(x);
  CHECK(a.shape() == Shape{1, 6, 16});
  CHECK((*pyr)(x).value() == a.value());
  cfg.structure_encoder_kind = StructureEncoderKind::coarse_to_fine;
  CHECK(max_abs_diff(a.value(), (*make_structure_encoder<float>(cfg, 5))(x).value()) > 0);

  cfg.structure_input_kind = StructureInputKind::silhouette;
  for (auto kind : {StructureEncoderKind::coarse_to_fine, StructureEncoderKind::pyramid_baseline}) {
    cfg.structure_encoder_kind = kind;
    const auto enc = make_structure_encoder<float>(cfg, 6);
    const Varf sil = Varf::constant(onehot_batch<float>({make_silhouette(blocky_seg(32))}, 2));
    CHECK((*enc)(sil).shape() == Shape{1, 6, 16});
  }
}
