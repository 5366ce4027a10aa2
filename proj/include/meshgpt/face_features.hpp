#pragma once
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "meshgpt/geometry.hpp"

namespace meshgpt {

// Face-adjacency graph: one node per face, an undirected edge whenever two
// faces share a mesh edge (two vertex indices). Non-manifold edges connect
// every incident face pair.
struct FaceGraph {
  int nodes = 0;
  std::vector<std::pair<int, int>> edges;       // sorted (a < b) pairs, deduped
  std::vector<std::vector<int>> neighbors;      // per node, ascending
};

FaceGraph build_face_graph(const DiscreteMesh& dmesh);

// Row layout: [posenc of 9 coords, normal xyz, corner angles, area].
// posenc(x) = [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{F-1} pi x),
// cos(2^{F-1} pi x)], so n_in = 9*(2F+1) + 7.
struct FaceFeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;              // row-major
  std::vector<uint8_t> degenerate;       // per face: zero-area flag

  double at(int r, int c) const { return data[size_t(r) * cols + c]; }
};

int feature_width(int frequencies);

// Per-face geometry from three corner points, in stored cyclic order.
// Zero-area faces get normal (0,0,0) and angles (0,0,pi) by convention.
struct TriangleGeometry {
  Vec3 normal;
  std::array<double, 3> angles;  // at v0, v1, v2
  double area = 0;
  bool degenerate = false;
};

TriangleGeometry triangle_geometry(const Vec3& a, const Vec3& b, const Vec3& c);

// Features are computed from bin centers so the encoder sees exactly the
// coordinates the decoder is trained to predict.
FaceFeatureMatrix compute_face_features(const DiscreteMesh& dmesh, int frequencies);

}  // namespace meshgpt
