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

// Canonical-view texture parameterization.
//
// A mesh is projected orthographically onto N fixed views; each vertex gets
// one UV per view and each face is textured from exactly one view. Image
// conventions: pixel (row y, column x) has centre u = (x + 0.5) / R,
// v = 1 - (y + 0.5) / R, so v points up and rows point down.

#pragma once

#include "semtex/image.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace semtex {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, int line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct Mesh {
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> vertices;
  Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> faces;
  std::vector<int> face_labels;  // empty or one per face

  Index num_vertices() const { return vertices.rows(); }
  Index num_faces() const { return faces.rows(); }
  bool has_labels() const { return !face_labels.empty(); }

  /// Throws std::invalid_argument on a broken invariant. `num_classes` < 0
  /// skips the label range check.
  void validate(int num_classes = -1) const;
};

/// Reads v/f records of an OBJ file; polygons are fan-triangulated. When
/// `labels_path` is given it holds one integer per OBJ face record.
Mesh load_mesh(const std::filesystem::path& path, const std::filesystem::path& labels_path = {});

/// Loads `stem.obj` and, if present, `stem.labels`.
Mesh load_labeled_mesh(const std::filesystem::path& obj_path);

/// Writes v/f records (and `stem.labels` when the mesh has labels).
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);

/// Axis-aligned box with outward counter-clockwise triangles (12 faces).
Mesh box_mesh(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, int label = -1);

/// Concatenates meshes; labels are kept only when every part has them.
Mesh merge_meshes(const std::vector<Mesh>& parts);

/// Centres the bounding box at the origin and scales its longest side to 2.
Mesh normalize_mesh(const Mesh& mesh);

struct ViewSpec {
  std::string name;
  Eigen::Vector3d forward;
  Eigen::Vector3d up;

  /// Throws unless forward and up are orthonormal.
  ViewSpec(std::string name, const Eigen::Vector3d& forward, const Eigen::Vector3d& up);
  Eigen::Vector3d right() const { return forward.cross(up); }
};

/// front, back, left, right, top, bottom.
std::vector<ViewSpec> car_views();
/// front only.
std::vector<ViewSpec> face_views();
/// "car6" or "face1".
std::vector<ViewSpec> view_preset(const std::string& name);

struct Projection {
  Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> uv;
  Eigen::VectorXd depth;
};

/// Orthographic projection: uv = ((p.right + 1) / 2, (p.up + 1) / 2),
/// depth = p.forward (smaller is nearer).
Projection project_view(const Mesh& mesh, const ViewSpec& view);

/// Face -> view index by largest normal . -forward (lowest index on ties),
/// with a centroid occlusion test rasterized at `resolution`.
std::vector<int> assign_faces(const Mesh& mesh, const std::vector<ViewSpec>& views, int resolution = 128);

struct UVAtlas {
  std::vector<ViewSpec> views;
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>> per_view_uv;
  std::vector<Eigen::VectorXd> per_view_depth;
  std::vector<int> face_view;
  int resolution = 0;

  int num_views() const { return static_cast<int>(views.size()); }
};

UVAtlas build_uv_atlas(const Mesh& mesh, const std::vector<ViewSpec>& views, int resolution);

struct SegmentationMapSet {
  std::vector<LabelImage> maps;
  int num_classes = 2;

  void validate() const;
};

struct TextureMapSet {
  std::vector<Image> maps;
};

/// Per view, depth-buffered fill of the faces assigned to that view with
/// their labels; uncovered pixels are 0.
SegmentationMapSet rasterize_segmentation(const Mesh& mesh, const UVAtlas& atlas, int num_classes);

SegmentationMapSet make_silhouette(const SegmentationMapSet& seg);

struct ExportedFiles {
  std::filesystem::path obj, mtl, texture;
};

/// Tiles of the N view textures are packed into one grid atlas image
/// (ceil(sqrt(N)) columns); every face references its view's tile.
ExportedFiles export_textured_mesh(const Mesh& mesh, const UVAtlas& atlas, const TextureMapSet& textures,
                                   const std::filesystem::path& out_dir, const std::string& name = "textured");

/// Grid layout used by export_textured_mesh.
struct TileGrid {
  int cols = 1, rows = 1;
  static TileGrid for_views(int n);
};

/// Depth-buffered orthographic render with nearest-texel lookup into each
/// face's assigned view. Background is white. `face_ids`, when given,
/// receives the visible face per pixel (-1 for background).
Image render_view(const Mesh& mesh, const UVAtlas& atlas, const TextureMapSet& textures, const ViewSpec& camera,
                  int size, LabelImage* face_ids = nullptr);

namespace detail {

/// Visits every pixel centre covered by triangle (a, b, c) given in pixel
/// coordinates; `visit(x, y, w0, w1, w2)` receives barycentric weights.
template <typename Visit>
void scan_triangle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c, int width,
                   int height, Visit&& visit) {
  const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
  if (area == 0) return;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}) - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}) - 0.5)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double w0 = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) / area;
      const double w1 = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) / area;
      const double w2 = 1 - w0 - w1;
      if (w0 >= 0 && w1 >= 0 && w2 >= 0) visit(x, y, w0, w1, w2);
    }
}

/// Pixel coordinates of a UV point in an R x R image.
inline Eigen::Vector2d uv_to_pixel(double u, double v, int resolution) {
  return {u * resolution, (1 - v) * resolution};
}

}  // namespace detail

}  // namespace semtex
