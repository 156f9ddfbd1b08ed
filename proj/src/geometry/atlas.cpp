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
#include "semtex/io.hpp"

#include <fstream>
#include <limits>

namespace semtex {

UVAtlas build_uv_atlas(const Mesh& mesh, const std::vector<ViewSpec>& views, int resolution) {
  if (resolution < 16 || (resolution & (resolution - 1)) != 0)
    throw std::invalid_argument("atlas resolution must be a power of two >= 16, got " + std::to_string(resolution));
  mesh.validate();
  UVAtlas atlas;
  atlas.views = views;
  atlas.resolution = resolution;
  for (const auto& view : views) {
    Projection p = project_view(mesh, view);
    atlas.per_view_uv.push_back(std::move(p.uv));
    atlas.per_view_depth.push_back(std::move(p.depth));
  }
  atlas.face_view = assign_faces(mesh, views, resolution);
  return atlas;
}

void SegmentationMapSet::validate() const {
  if (num_classes < 2) throw std::invalid_argument("segmentation needs at least 2 classes");
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].rows() != maps.front().rows() || maps[i].cols() != maps.front().cols())
      throw std::invalid_argument("segmentation map " + std::to_string(i) + " differs in size");
    if (maps[i].size() > 0 && (maps[i].minCoeff() < 0 || maps[i].maxCoeff() >= num_classes))
      throw std::invalid_argument("segmentation map " + std::to_string(i) + " has labels outside [0, " +
                                  std::to_string(num_classes) + ")");
  }
}

SegmentationMapSet rasterize_segmentation(const Mesh& mesh, const UVAtlas& atlas, int num_classes) {
  if (!mesh.has_labels()) throw std::invalid_argument("rasterize_segmentation needs per-face labels");
  mesh.validate(num_classes);
  const int R = atlas.resolution;
  SegmentationMapSet out;
  out.num_classes = num_classes;
  for (int i = 0; i < atlas.num_views(); ++i) {
    const auto& uv = atlas.per_view_uv[static_cast<std::size_t>(i)];
    const auto& depth = atlas.per_view_depth[static_cast<std::size_t>(i)];
    LabelImage labels = LabelImage::Zero(R, R);
    Eigen::MatrixXd z = Eigen::MatrixXd::Constant(R, R, std::numeric_limits<double>::infinity());
    for (Index f = 0; f < mesh.num_faces(); ++f) {
      if (atlas.face_view[static_cast<std::size_t>(f)] != i) continue;
      const int i0 = mesh.faces(f, 0), i1 = mesh.faces(f, 1), i2 = mesh.faces(f, 2);
      const int label = mesh.face_labels[static_cast<std::size_t>(f)];
      detail::scan_triangle(detail::uv_to_pixel(uv(i0, 0), uv(i0, 1), R), detail::uv_to_pixel(uv(i1, 0), uv(i1, 1), R),
                            detail::uv_to_pixel(uv(i2, 0), uv(i2, 1), R), R, R,
                            [&](int x, int y, double w0, double w1, double w2) {
                              const double d = w0 * depth[i0] + w1 * depth[i1] + w2 * depth[i2];
                              if (d < z(y, x)) {
                                z(y, x) = d;
                                labels(y, x) = label;
                              }
                            });
    }
    out.maps.push_back(std::move(labels));
  }
  return out;
}

SegmentationMapSet make_silhouette(const SegmentationMapSet& seg) {
  SegmentationMapSet out;
  out.num_classes = 2;
  for (const auto& m : seg.maps) out.maps.push_back(make_silhouette(m));
  return out;
}

TileGrid TileGrid::for_views(int n) {
  if (n < 1) throw std::invalid_argument("tile grid needs at least one view");
  TileGrid g;
  g.cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  g.rows = (n + g.cols - 1) / g.cols;
  return g;
}

ExportedFiles export_textured_mesh(const Mesh& mesh, const UVAtlas& atlas, const TextureMapSet& textures,
                                   const std::filesystem::path& out_dir, const std::string& name) {
  const int N = atlas.num_views();
  if (static_cast<int>(textures.maps.size()) != N)
    throw std::invalid_argument("texture count " + std::to_string(textures.maps.size()) + " differs from view count " +
                                std::to_string(N));
  const Index T = textures.maps.front().dim(1);
  for (const auto& t : textures.maps)
    if (t.dim(1) != T || t.dim(2) != T) throw std::invalid_argument("textures must share one square size");
  std::filesystem::create_directories(out_dir);
  const TileGrid grid = TileGrid::for_views(N);

  Image sheet = Image::constant({3, grid.rows * T, grid.cols * T}, 1.0f);
  const Index SW = grid.cols * T, SP = grid.rows * T * SW;
  for (int i = 0; i < N; ++i) {
    const Index r0 = (i / grid.cols) * T, c0 = (i % grid.cols) * T;
    const Image& t = textures.maps[static_cast<std::size_t>(i)];
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < T; ++y)
        for (Index x = 0; x < T; ++x) sheet[c * SP + (r0 + y) * SW + c0 + x] = t[(c * T + y) * T + x];
  }

  ExportedFiles files{out_dir / (name + ".obj"), out_dir / (name + ".mtl"), out_dir / (name + ".png")};
  write_png(files.texture, sheet);
  {
    std::ofstream mtl(files.mtl);
    mtl << "newmtl texture\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd " << files.texture.filename().string()
        << '\n';
    if (!mtl) throw std::runtime_error("failed writing " + files.mtl.string());
  }
  std::ofstream obj(files.obj);
  obj.precision(17);
  obj << "mtllib " << files.mtl.filename().string() << '\n';
  const Index V = mesh.num_vertices();
  for (Index v = 0; v < V; ++v)
    obj << "v " << mesh.vertices(v, 0) << ' ' << mesh.vertices(v, 1) << ' ' << mesh.vertices(v, 2) << '\n';
  for (int i = 0; i < N; ++i) {
    const auto& uv = atlas.per_view_uv[static_cast<std::size_t>(i)];
    const double col = i % grid.cols, row = i / grid.cols;
    for (Index v = 0; v < V; ++v)
      obj << "vt " << (col + uv(v, 0)) / grid.cols << ' ' << 1 - (row + 1 - uv(v, 1)) / grid.rows << '\n';
  }
  obj << "usemtl texture\n";
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const Index base = atlas.face_view[static_cast<std::size_t>(f)] * V + 1;
    obj << 'f';
    for (int k = 0; k < 3; ++k) obj << ' ' << mesh.faces(f, k) + 1 << '/' << base + mesh.faces(f, k);
    obj << '\n';
  }
  if (!obj) throw std::runtime_error("failed writing " + files.obj.string());
  return files;
}

}  // namespace semtex
