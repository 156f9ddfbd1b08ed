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

#include "semtex/geometry.hpp"

#include <limits>

namespace semtex {

Image render_view(const Mesh& mesh, const UVAtlas& atlas, const TextureMapSet& textures, const ViewSpec& camera,
                  int size, LabelImage* face_ids) {
  if (static_cast<int>(textures.maps.size()) != atlas.num_views())
    throw std::invalid_argument("texture count differs from atlas view count");
  const Projection p = project_view(mesh, camera);
  const Index P = static_cast<Index>(size) * size;
  Image out = Image::constant({3, size, size}, 1.0f);
  Eigen::MatrixXd z = Eigen::MatrixXd::Constant(size, size, std::numeric_limits<double>::infinity());
  LabelImage ids = LabelImage::Constant(size, size, -1);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const int i0 = mesh.faces(f, 0), i1 = mesh.faces(f, 1), i2 = mesh.faces(f, 2);
    const int view = atlas.face_view[static_cast<std::size_t>(f)];
    const auto& uv = atlas.per_view_uv[static_cast<std::size_t>(view)];
    const Image& tex = textures.maps[static_cast<std::size_t>(view)];
    const Index T = tex.dim(1), TP = T * tex.dim(2);
    detail::scan_triangle(
        detail::uv_to_pixel(p.uv(i0, 0), p.uv(i0, 1), size), detail::uv_to_pixel(p.uv(i1, 0), p.uv(i1, 1), size),
        detail::uv_to_pixel(p.uv(i2, 0), p.uv(i2, 1), size), size, size,
        [&](int x, int y, double w0, double w1, double w2) {
          const double d = w0 * p.depth[i0] + w1 * p.depth[i1] + w2 * p.depth[i2];
          if (!(d < z(y, x))) return;
          z(y, x) = d;
          ids(y, x) = static_cast<int>(f);
          const double u = w0 * uv(i0, 0) + w1 * uv(i1, 0) + w2 * uv(i2, 0);
          const double v = w0 * uv(i0, 1) + w1 * uv(i1, 1) + w2 * uv(i2, 1);
          const Index tx = std::clamp<Index>(static_cast<Index>(std::floor(u * T)), 0, T - 1);
          const Index ty = std::clamp<Index>(static_cast<Index>(std::floor((1 - v) * T)), 0, T - 1);
          for (Index c = 0; c < 3; ++c) out[c * P + static_cast<Index>(y) * size + x] = tex[c * TP + ty * T + tx];
        });
  }
  if (face_ids) *face_ids = std::move(ids);
  return out;
}

}  // namespace semtex
