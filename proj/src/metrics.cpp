#include "meshgpt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace meshgpt {

PointCloud sample_surface_points(const Mesh& mesh, int count, uint64_t seed) {
  std::vector<double> cumulative;
  std::vector<size_t> face_of;
  double total = 0;
  for (size_t i = 0; i < mesh.faces.size(); ++i) {
    const Face& f = mesh.faces[i];
    const Vec3 a = mesh.vertices[f[0]], b = mesh.vertices[f[1]], c = mesh.vertices[f[2]];
    const double area = 0.5 * (b - a).cross(c - a).norm();
    if (area <= 0) continue;
    total += area;
    cumulative.push_back(total);
    face_of.push_back(i);
  }
  if (cumulative.empty()) throw MeshError("sample_surface_points: no non-degenerate faces");

  PointCloud out;
  out.points.reserve(size_t(count));
  Rng rng(seed);
  for (int p = 0; p < count; ++p) {
    const double u = rng.uniform() * total;
    const size_t pick = size_t(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    const Face& f = mesh.faces[face_of[std::min(pick, face_of.size() - 1)]];
    const Vec3 a = mesh.vertices[f[0]], b = mesh.vertices[f[1]], c = mesh.vertices[f[2]];
    // sqrt trick for uniform barycentric coordinates
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const double w0 = 1.0 - r1, w1 = r1 * (1.0 - r2), w2 = r1 * r2;
    out.points.push_back(a * w0 + b * w1 + c * w2);
  }
  return out;
}

namespace {

double min_sq_dist(const Vec3& p, const PointCloud& cloud) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& q : cloud.points) {
    const Vec3 d = p - q;
    best = std::min(best, d.dot(d));
  }
  return best;
}

}  // namespace

double chamfer(const PointCloud& x, const PointCloud& y) {
  if (x.points.empty() || y.points.empty()) throw MeshError("chamfer: empty point cloud");
  double xy = 0, yx = 0;
  for (const Vec3& p : x.points) xy += min_sq_dist(p, y);
  for (const Vec3& q : y.points) yx += min_sq_dist(q, x);
  return xy / double(x.points.size()) + yx / double(y.points.size());
}

ShapeSetMetrics shape_set_metrics(const std::vector<PointCloud>& gen,
                                  const std::vector<PointCloud>& ref) {
  if (gen.empty() || ref.empty()) throw MeshError("shape_set_metrics: empty set");
  const size_t G = gen.size(), R = ref.size();

  // Pairwise CD blocks; the union matrix for 1-NNA indexes generated clouds
  // first, then references.
  std::vector<double> gr(G * R), gg(G * G), rr(R * R);
  for (size_t i = 0; i < G; ++i) {
    for (size_t j = 0; j < R; ++j) gr[i * R + j] = chamfer(gen[i], ref[j]);
  }
  for (size_t i = 0; i < G; ++i) {
    for (size_t j = i + 1; j < G; ++j) gg[i * G + j] = gg[j * G + i] = chamfer(gen[i], gen[j]);
  }
  for (size_t i = 0; i < R; ++i) {
    for (size_t j = i + 1; j < R; ++j) rr[i * R + j] = rr[j * R + i] = chamfer(ref[i], ref[j]);
  }

  ShapeSetMetrics out;

  double mmd = 0;
  for (size_t j = 0; j < R; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < G; ++i) best = std::min(best, gr[i * R + j]);
    mmd += best;
  }
  out.mmd = mmd / double(R);

  std::vector<char> covered(R, 0);
  for (size_t i = 0; i < G; ++i) {
    size_t arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < R; ++j) {
      if (gr[i * R + j] < best) {  // strict: first minimal index wins
        best = gr[i * R + j];
        arg = j;
      }
    }
    covered[arg] = 1;
  }
  size_t cov_count = 0;
  for (char c : covered) cov_count += size_t(c);
  out.cov = double(cov_count) / double(R);

  // Leave-one-out 1-NN over the union. Candidates scan generated clouds then
  // references in index order with strict <, which realizes the documented
  // tie-break (generated set first, then lower index).
  const size_t total = G + R;
  auto dist = [&](size_t a, size_t b) {
    const bool ag = a < G, bg = b < G;
    if (ag && bg) return gg[a * G + b];
    if (!ag && !bg) return rr[(a - G) * R + (b - G)];
    if (ag) return gr[a * R + (b - G)];
    return gr[b * R + (a - G)];
  };
  size_t correct = 0;
  for (size_t a = 0; a < total; ++a) {
    size_t nearest = total;
    double best = std::numeric_limits<double>::infinity();
    for (size_t b = 0; b < total; ++b) {
      if (b == a) continue;
      const double d = dist(a, b);
      if (d < best) {
        best = d;
        nearest = b;
      }
    }
    const bool same_set = (a < G) == (nearest < G);
    if (same_set) ++correct;
  }
  out.one_nna = double(correct) / double(total);
  return out;
}

Compactness compactness(const std::vector<Mesh>& meshes) {
  if (meshes.empty()) throw MeshError("compactness: empty mesh list");
  double v = 0, f = 0;
  for (const Mesh& m : meshes) {
    v += double(m.vertices.size());
    f += double(m.faces.size());
  }
  return {v / double(meshes.size()), f / double(meshes.size())};
}

}  // namespace meshgpt
