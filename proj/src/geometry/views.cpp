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

#include <Eigen/LU>

#include <limits>

namespace semtex {
namespace {

constexpr double kOrthoTolerance = 1e-9;
// Depth slack of the occlusion test, in normalized model units.
constexpr double kOcclusionEpsilon = 1e-4;

Eigen::Vector3d vertex(const Mesh& m, int i) { return m.vertices.row(i).transpose(); }

}  // namespace

ViewSpec::ViewSpec(std::string name_, const Eigen::Vector3d& forward_, const Eigen::Vector3d& up_)
    : name(std::move(name_)), forward(forward_), up(up_) {
  if (std::abs(forward.norm() - 1) > kOrthoTolerance || std::abs(up.norm() - 1) > kOrthoTolerance ||
      std::abs(forward.dot(up)) > kOrthoTolerance)
    throw std::invalid_argument("view " + name + ": forward and up must be orthonormal");
}

std::vector<ViewSpec> car_views() {
  using V = Eigen::Vector3d;
  return {
      {"front", V(0, 0, -1), V(0, 1, 0)}, {"back", V(0, 0, 1), V(0, 1, 0)},
      {"left", V(1, 0, 0), V(0, 1, 0)},   {"right", V(-1, 0, 0), V(0, 1, 0)},
      {"top", V(0, -1, 0), V(0, 0, -1)},  {"bottom", V(0, 1, 0), V(0, 0, -1)},
  };
}

std::vector<ViewSpec> face_views() { return {car_views().front()}; }

std::vector<ViewSpec> view_preset(const std::string& name) {
  if (name == "car6") return car_views();
  if (name == "face1") return face_views();
  throw std::invalid_argument("unknown view preset '" + name + "' (expected car6 or face1)");
}

Projection project_view(const Mesh& mesh, const ViewSpec& view) {
  const Eigen::Vector3d right = view.right();
  Projection p;
  p.uv.resize(mesh.num_vertices(), 2);
  p.uv.col(0) = ((mesh.vertices * right).array() + 1) / 2;
  p.uv.col(1) = ((mesh.vertices * view.up).array() + 1) / 2;
  p.depth = mesh.vertices * view.forward;
  return p;
}

std::vector<int> assign_faces(const Mesh& mesh, const std::vector<ViewSpec>& views, int resolution) {
  if (views.empty()) throw std::invalid_argument("no views");
  const Index F = mesh.num_faces();
  const int N = static_cast<int>(views.size());
  Eigen::MatrixXd score(F, N);
  Eigen::MatrixX3d centroid(F, 3);
  for (Index f = 0; f < F; ++f) {
    const Eigen::Vector3d a = vertex(mesh, mesh.faces(f, 0)), b = vertex(mesh, mesh.faces(f, 1)),
                          c = vertex(mesh, mesh.faces(f, 2));
    const Eigen::Vector3d n = (b - a).cross(c - a);
    if (!(n.norm() > 0)) throw std::invalid_argument("face " + std::to_string(f) + " has zero area");
    const Eigen::Vector3d unit = n.normalized();
    for (int i = 0; i < N; ++i) score(f, i) = -unit.dot(views[static_cast<std::size_t>(i)].forward);
    centroid.row(f) = ((a + b + c) / 3).transpose();
  }

  // Per-view nearest-face buffers over all faces.
  std::vector<LabelImage> idbuf;
  std::vector<Projection> proj;
  for (const auto& view : views) {
    proj.push_back(project_view(mesh, view));
    const Projection& p = proj.back();
    Eigen::MatrixXd z = Eigen::MatrixXd::Constant(resolution, resolution, std::numeric_limits<double>::infinity());
    LabelImage ids = LabelImage::Constant(resolution, resolution, -1);
    for (Index f = 0; f < F; ++f) {
      const int i0 = mesh.faces(f, 0), i1 = mesh.faces(f, 1), i2 = mesh.faces(f, 2);
      detail::scan_triangle(detail::uv_to_pixel(p.uv(i0, 0), p.uv(i0, 1), resolution),
                            detail::uv_to_pixel(p.uv(i1, 0), p.uv(i1, 1), resolution),
                            detail::uv_to_pixel(p.uv(i2, 0), p.uv(i2, 1), resolution), resolution, resolution,
                            [&](int x, int y, double w0, double w1, double w2) {
                              const double d = w0 * p.depth[i0] + w1 * p.depth[i1] + w2 * p.depth[i2];
                              if (d < z(y, x)) {
                                z(y, x) = d;
                                ids(y, x) = static_cast<int>(f);
                              }
                            });
    }
    idbuf.push_back(std::move(ids));
  }
  // The face owning the centroid's pixel occludes f if its plane lies
  // nearer than f's centroid at that exact image point.
  auto occluded = [&](Index f, int i) {
    const Projection& p = proj[static_cast<std::size_t>(i)];
    const Eigen::Vector3d c = centroid.row(f).transpose();
    const ViewSpec& view = views[static_cast<std::size_t>(i)];
    const Eigen::Vector2d q((c.dot(view.right()) + 1) / 2, (c.dot(view.up) + 1) / 2);
    const Eigen::Vector2d px = detail::uv_to_pixel(q.x(), q.y(), resolution);
    const int x = std::clamp(static_cast<int>(std::floor(px.x())), 0, resolution - 1);
    const int y = std::clamp(static_cast<int>(std::floor(px.y())), 0, resolution - 1);
    const int g = idbuf[static_cast<std::size_t>(i)](y, x);
    if (g < 0 || g == f) return false;
    const int j0 = mesh.faces(g, 0), j1 = mesh.faces(g, 1), j2 = mesh.faces(g, 2);
    const Eigen::Vector2d a = p.uv.row(j0).transpose(), b = p.uv.row(j1).transpose(), e = p.uv.row(j2).transpose();
    Eigen::Matrix2d m;
    m << b - a, e - a;
    const Eigen::Vector2d w = m.inverse() * (q - a);
    const double dg = (1 - w.x() - w.y()) * p.depth[j0] + w.x() * p.depth[j1] + w.y() * p.depth[j2];
    return dg < c.dot(view.forward) - kOcclusionEpsilon;
  };

  std::vector<int> out(static_cast<std::size_t>(F));
  for (Index f = 0; f < F; ++f) {
    int best = 0;
    for (int i = 1; i < N; ++i)
      if (score(f, i) > score(f, best)) best = i;
    if (occluded(f, best)) {
      int fallback = -1;
      for (int i = 0; i < N; ++i)
        if (i != best && score(f, i) > 0 && !occluded(f, i) && (fallback < 0 || score(f, i) > score(f, fallback)))
          fallback = i;
      if (fallback >= 0) best = fallback;
    }
    out[static_cast<std::size_t>(f)] = best;
  }
  return out;
}

}  // namespace semtex
