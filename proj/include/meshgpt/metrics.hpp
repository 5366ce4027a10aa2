#pragma once
#include <cstdint>
#include <vector>

#include "meshgpt/geometry.hpp"
#include "meshgpt/rng.hpp"

namespace meshgpt {

struct PointCloud {
  std::vector<Vec3> points;
};

// Faces chosen with probability proportional to area, uniform barycentric
// placement inside each; deterministic per seed.
PointCloud sample_surface_points(const Mesh& mesh, int count, uint64_t seed);

// Squared-distance Chamfer with mean aggregation:
//   CD(X, Y) = mean_x min_y |x - y|^2 + mean_y min_x |x - y|^2.
double chamfer(const PointCloud& x, const PointCloud& y);

struct ShapeSetMetrics {
  double mmd = 0;        // mean over references of min CD to generated
  double cov = 0;        // fraction of references that are someone's nearest
  double one_nna = 0;    // leave-one-out 1-NN accuracy over the union
};

// Distance ties are broken by (set, index) with the generated set first.
ShapeSetMetrics shape_set_metrics(const std::vector<PointCloud>& generated,
                                  const std::vector<PointCloud>& reference);

struct Compactness {
  double avg_vertices = 0;
  double avg_faces = 0;
};

Compactness compactness(const std::vector<Mesh>& meshes);

}  // namespace meshgpt
