#include "meshgpt/face_features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace meshgpt {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

FaceGraph build_face_graph(const DiscreteMesh& dmesh) {
  FaceGraph g;
  g.nodes = int(dmesh.faces.size());
  g.neighbors.resize(g.nodes);

  // Edge key -> incident faces. std::map keeps edge iteration deterministic.
  std::map<std::pair<int, int>, std::vector<int>> incident;
  for (int fi = 0; fi < g.nodes; ++fi) {
    const Face& f = dmesh.faces[fi];
    for (int k = 0; k < 3; ++k) {
      int a = f[k], b = f[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      incident[{a, b}].push_back(fi);
    }
  }
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [edge, faces] : incident) {
    for (size_t i = 0; i < faces.size(); ++i) {
      for (size_t j = i + 1; j < faces.size(); ++j) {
        int a = faces[i], b = faces[j];
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        pairs.emplace_back(a, b);
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  g.edges = std::move(pairs);
  for (const auto& [a, b] : g.edges) {
    g.neighbors[a].push_back(b);
    g.neighbors[b].push_back(a);
  }
  for (auto& n : g.neighbors) std::sort(n.begin(), n.end());
  return g;
}

int feature_width(int frequencies) { return 9 * (2 * frequencies + 1) + 7; }

TriangleGeometry triangle_geometry(const Vec3& a, const Vec3& b, const Vec3& c) {
  TriangleGeometry out;
  Vec3 ab = b - a, ac = c - a;
  Vec3 cr = ab.cross(ac);
  double cn = cr.norm();
  out.area = 0.5 * cn;
  if (cn < 1e-12) {
    out.degenerate = true;
    out.normal = {0, 0, 0};
    out.angles = {0, 0, kPi};
    return out;
  }
  out.normal = cr * (1.0 / cn);
  auto corner = [](const Vec3& u, const Vec3& v) {
    double d = u.dot(v) / (u.norm() * v.norm());
    return std::acos(std::clamp(d, -1.0, 1.0));
  };
  out.angles[0] = corner(b - a, c - a);
  out.angles[1] = corner(a - b, c - b);
  out.angles[2] = corner(a - c, b - c);
  return out;
}

FaceFeatureMatrix compute_face_features(const DiscreteMesh& dmesh, int frequencies) {
  FaceFeatureMatrix m;
  m.rows = int(dmesh.faces.size());
  m.cols = feature_width(frequencies);
  m.data.assign(size_t(m.rows) * m.cols, 0.0);
  m.degenerate.assign(m.rows, 0);

  for (int fi = 0; fi < m.rows; ++fi) {
    const Face& f = dmesh.faces[fi];
    std::array<Vec3, 3> p;
    for (int j = 0; j < 3; ++j) {
      const BinVertex& b = dmesh.vertices[f[j]];
      p[j] = {bin_center(b[0]), bin_center(b[1]), bin_center(b[2])};
    }
    double* row = &m.data[size_t(fi) * m.cols];
    int c = 0;
    for (int j = 0; j < 3; ++j) {
      for (double x : {p[j].x, p[j].y, p[j].z}) {
        row[c++] = x;
        for (int k = 0; k < frequencies; ++k) {
          double w = std::ldexp(kPi, k) * x;  // 2^k * pi * x
          row[c++] = std::sin(w);
          row[c++] = std::cos(w);
        }
      }
    }
    TriangleGeometry geo = triangle_geometry(p[0], p[1], p[2]);
    row[c++] = geo.normal.x;
    row[c++] = geo.normal.y;
    row[c++] = geo.normal.z;
    row[c++] = geo.angles[0];
    row[c++] = geo.angles[1];
    row[c++] = geo.angles[2];
    row[c++] = geo.area;
    m.degenerate[fi] = geo.degenerate ? 1 : 0;
  }
  return m;
}

}  // namespace meshgpt
