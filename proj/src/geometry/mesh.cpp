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

#include <charconv>
#include <fstream>
#include <sstream>

namespace semtex {
namespace {

// Vertex index of one "f" token ("7", "7/2", "7//3", "-1/...") as 0-based.
int parse_face_index(const std::string& token, Index num_vertices, const std::string& file, int line) {
  const std::string head = token.substr(0, token.find('/'));
  long value = 0;
  const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
  if (ec != std::errc() || ptr != head.data() + head.size() || value == 0)
    throw ParseError(file, line, "bad face index '" + token + "'");
  return static_cast<int>(value < 0 ? num_vertices + value : value - 1);
}

}  // namespace

void Mesh::validate(int num_classes) const {
  const Index V = num_vertices();
  for (Index f = 0; f < num_faces(); ++f) {
    for (int k = 0; k < 3; ++k)
      if (faces(f, k) < 0 || faces(f, k) >= V)
        throw std::invalid_argument("face " + std::to_string(f) + " references vertex " +
                                    std::to_string(faces(f, k)) + " outside [0, " + std::to_string(V) + ")");
    if (faces(f, 0) == faces(f, 1) || faces(f, 1) == faces(f, 2) || faces(f, 0) == faces(f, 2))
      throw std::invalid_argument("face " + std::to_string(f) + " repeats a vertex");
  }
  if (has_labels()) {
    if (static_cast<Index>(face_labels.size()) != num_faces())
      throw std::invalid_argument("face label count " + std::to_string(face_labels.size()) + " differs from face count " +
                                  std::to_string(num_faces()));
    for (std::size_t f = 0; f < face_labels.size(); ++f)
      if (face_labels[f] < 0 || (num_classes >= 0 && face_labels[f] >= num_classes))
        throw std::invalid_argument("face " + std::to_string(f) + " has label " + std::to_string(face_labels[f]) +
                                    " outside [0, " + std::to_string(num_classes) + ")");
  }
}

Mesh load_mesh(const std::filesystem::path& path, const std::filesystem::path& labels_path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mesh " + path.string());
  const std::string file = path.string();
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> tris;
  std::vector<int> record_of_tri;
  int records = 0;
  std::string text;
  for (int line = 1; std::getline(in, text); ++line) {
    std::istringstream ss(text);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d p;
      if (!(ss >> p.x() >> p.y() >> p.z())) throw ParseError(file, line, "vertex needs 3 coordinates");
      if (!p.allFinite()) throw ParseError(file, line, "non-finite vertex");
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string token;
      while (ss >> token) idx.push_back(parse_face_index(token, static_cast<Index>(verts.size()), file, line));
      if (idx.size() < 3) throw ParseError(file, line, "face needs at least 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        tris.emplace_back(idx[0], idx[k], idx[k + 1]);
        record_of_tri.push_back(records);
      }
      ++records;
    }
  }
  Mesh mesh;
  mesh.vertices.resize(static_cast<Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Index>(i)) = verts[i].transpose();
  mesh.faces.resize(static_cast<Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i) mesh.faces.row(static_cast<Index>(i)) = tris[i].transpose();

  if (!labels_path.empty()) {
    std::ifstream lin(labels_path);
    if (!lin) throw std::runtime_error("cannot open face labels " + labels_path.string());
    std::vector<int> per_record;
    std::string ltext;
    for (int line = 1; std::getline(lin, ltext); ++line) {
      if (ltext.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream ls(ltext);
      int label = 0;
      std::string rest;
      if (!(ls >> label) || (ls >> rest)) throw ParseError(labels_path.string(), line, "expected one integer");
      per_record.push_back(label);
    }
    if (static_cast<int>(per_record.size()) != records)
      throw std::invalid_argument(labels_path.string() + " has " + std::to_string(per_record.size()) +
                                  " labels for " + std::to_string(records) + " faces");
    for (int r : record_of_tri) mesh.face_labels.push_back(per_record[static_cast<std::size_t>(r)]);
  }
  mesh.validate();
  return mesh;
}

Mesh load_labeled_mesh(const std::filesystem::path& obj_path) {
  std::filesystem::path labels = obj_path;
  labels.replace_extension(".labels");
  return load_mesh(obj_path, std::filesystem::exists(labels) ? labels : std::filesystem::path{});
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mesh " + path.string());
  out.precision(17);
  for (Index v = 0; v < mesh.num_vertices(); ++v)
    out << "v " << mesh.vertices(v, 0) << ' ' << mesh.vertices(v, 1) << ' ' << mesh.vertices(v, 2) << '\n';
  for (Index f = 0; f < mesh.num_faces(); ++f)
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' ' << mesh.faces(f, 2) + 1 << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
  if (mesh.has_labels()) {
    std::filesystem::path lp = path;
    lp.replace_extension(".labels");
    std::ofstream lo(lp);
    for (int l : mesh.face_labels) lo << l << '\n';
    if (!lo) throw std::runtime_error("failed writing " + lp.string());
  }
}

Mesh box_mesh(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, int label) {
  Mesh m;
  m.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i)
    m.vertices.row(i) << (i & 1 ? hi.x() : lo.x()), (i & 2 ? hi.y() : lo.y()), (i & 4 ? hi.z() : lo.z());
  static constexpr int kQuads[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                                       {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  m.faces.resize(12, 3);
  for (int q = 0; q < 6; ++q) {
    m.faces.row(2 * q) << kQuads[q][0], kQuads[q][1], kQuads[q][2];
    m.faces.row(2 * q + 1) << kQuads[q][0], kQuads[q][2], kQuads[q][3];
  }
  if (label >= 0) m.face_labels.assign(12, label);
  return m;
}

Mesh merge_meshes(const std::vector<Mesh>& parts) {
  Index V = 0, F = 0;
  bool labelled = true;
  for (const auto& p : parts) {
    V += p.num_vertices();
    F += p.num_faces();
    labelled = labelled && p.has_labels();
  }
  Mesh out;
  out.vertices.resize(V, 3);
  out.faces.resize(F, 3);
  Index v = 0, f = 0;
  for (const auto& p : parts) {
    out.vertices.middleRows(v, p.num_vertices()) = p.vertices;
    out.faces.middleRows(f, p.num_faces()) = p.faces.array() + static_cast<int>(v);
    if (labelled) out.face_labels.insert(out.face_labels.end(), p.face_labels.begin(), p.face_labels.end());
    v += p.num_vertices();
    f += p.num_faces();
  }
  return out;
}

Mesh normalize_mesh(const Mesh& mesh) {
  if (mesh.num_vertices() < 1) throw std::invalid_argument("cannot normalize an empty mesh");
  const Eigen::RowVector3d lo = mesh.vertices.colwise().minCoeff();
  const Eigen::RowVector3d hi = mesh.vertices.colwise().maxCoeff();
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0)) throw std::invalid_argument("degenerate mesh: all vertices coincide, cannot normalize scale");
  const Eigen::RowVector3d centre = (lo + hi) / 2;
  Mesh out = mesh;
  out.vertices = ((mesh.vertices.rowwise() - centre) * (2.0 / extent)).eval();
  return out;
}

}  // namespace semtex
