#include <doctest.h>

#include <cmath>

#include "meshgpt/face_features.hpp"
#include "test_util.hpp"

using namespace meshgpt;

namespace {
constexpr double kPi = 3.14159265358979323846;

DiscreteMesh tetrahedron() {
  DiscreteMesh d;
  d.vertices = {{10, 10, 10}, {60, 10, 10}, {10, 60, 10}, {10, 10, 60}};
  d.faces = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  return d;
}

}  // namespace

TEST_CASE("face graph: shared edge, isolated face, tetrahedron") {
  DiscreteMesh d;
  d.vertices = {{0, 0, 0}, {50, 0, 0}, {0, 50, 0}, {50, 50, 0}, {100, 100, 100},
                {120, 100, 100}, {100, 120, 100}};
  d.faces = {{0, 1, 2}, {1, 3, 2}, {4, 5, 6}};
  FaceGraph g = build_face_graph(d);
  REQUIRE(g.nodes == 3);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == std::pair<int, int>{0, 1});
  CHECK(g.neighbors[2].empty());  // isolated triangle

  FaceGraph tg = build_face_graph(tetrahedron());
  CHECK(tg.edges.size() == 6);  // every face adjacent to every other
  for (const auto& nb : tg.neighbors) CHECK(nb.size() == 3);
}

TEST_CASE("triangle geometry: right triangle") {
  TriangleGeometry geo = triangle_geometry({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
  CHECK(geo.normal.x == doctest::Approx(0));
  CHECK(geo.normal.y == doctest::Approx(0));
  CHECK(geo.normal.z == doctest::Approx(1));
  CHECK(geo.area == doctest::Approx(0.5));
  CHECK(geo.angles[0] == doctest::Approx(kPi / 2));
  CHECK(geo.angles[1] == doctest::Approx(kPi / 4));
  CHECK(geo.angles[2] == doctest::Approx(kPi / 4));
  CHECK(!geo.degenerate);
}

TEST_CASE("triangle geometry: translation invariance") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    Vec3 a{rng.uniform(), rng.uniform(), rng.uniform()};
    Vec3 b{rng.uniform(), rng.uniform(), rng.uniform()};
    Vec3 c{rng.uniform(), rng.uniform(), rng.uniform()};
    Vec3 t{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    TriangleGeometry g1 = triangle_geometry(a, b, c);
    TriangleGeometry g2 = triangle_geometry(a + t, b + t, c + t);
    CHECK(g1.area == doctest::Approx(g2.area).epsilon(1e-9));
    for (int k = 0; k < 3; ++k) {
      CHECK(g1.angles[k] == doctest::Approx(g2.angles[k]).epsilon(1e-9));
    }
    CHECK(g1.normal.x == doctest::Approx(g2.normal.x).epsilon(1e-9));
  }
}

TEST_CASE("triangle geometry: zero-area convention") {
  TriangleGeometry geo = triangle_geometry({0, 0, 0}, {1, 1, 1}, {2, 2, 2});
  CHECK(geo.degenerate);
  CHECK(geo.normal.x == 0);
  CHECK(geo.normal.y == 0);
  CHECK(geo.normal.z == 0);
  CHECK(geo.angles[0] == 0);
  CHECK(geo.angles[1] == 0);
  CHECK(geo.angles[2] == doctest::Approx(kPi));
}

TEST_CASE("feature width and posenc values") {
  CHECK(feature_width(8) == 160);  // 9*(2*8+1) + 7
  CHECK(feature_width(1) == 34);

  DiscreteMesh d;
  // bin 63.5... no bin maps exactly to 0; use bin 64 -> 0.00390625 and check
  // posenc structure on a face instead via F=1.
  d.vertices = {{64, 64, 64}, {100, 64, 64}, {64, 100, 64}};
  d.faces = {{0, 1, 2}};
  FaceFeatureMatrix m = compute_face_features(d, 1);
  REQUIRE(m.cols == 34);
  // layout per coordinate: [x, sin(pi x), cos(pi x)]
  const double x = bin_center(64);
  CHECK(m.at(0, 0) == doctest::Approx(x));
  CHECK(m.at(0, 1) == doctest::Approx(std::sin(kPi * x)));
  CHECK(m.at(0, 2) == doctest::Approx(std::cos(kPi * x)));
}

TEST_CASE("posenc of zero is [0, 0, 1] per frequency") {
  // directly on the formula: x = 0 gives sin 0, cos 1 at every octave
  const double x = 0.0;
  for (int k = 0; k < 8; ++k) {
    CHECK(std::sin(std::ldexp(kPi, k) * x) == 0.0);
    CHECK(std::cos(std::ldexp(kPi, k) * x) == 1.0);
  }
}

TEST_CASE("face features: angles sum to pi, area matches Heron") {
  Rng rng(9);
  Mesh m = testutil::random_mesh(rng, 30, 50);
  DiscreteMesh d = canonicalize(discretize(m));
  FaceFeatureMatrix feats = compute_face_features(d, 8);
  Mesh centers = undiscretize(d);
  const int acol = feats.cols - 4;  // angles start here, area last
  for (size_t f = 0; f < d.faces.size(); ++f) {
    if (feats.degenerate[f]) continue;
    const double sum = feats.at(int(f), acol) + feats.at(int(f), acol + 1) +
                       feats.at(int(f), acol + 2);
    CHECK(std::abs(sum - kPi) < 1e-5);
    // Heron's formula as an independent area oracle
    const Vec3 a = centers.vertices[size_t(d.faces[f][0])];
    const Vec3 b = centers.vertices[size_t(d.faces[f][1])];
    const Vec3 c = centers.vertices[size_t(d.faces[f][2])];
    const double la = (b - c).norm(), lb = (a - c).norm(), lc = (a - b).norm();
    const double s = 0.5 * (la + lb + lc);
    const double heron = std::sqrt(std::max(0.0, s * (s - la) * (s - lb) * (s - lc)));
    CHECK(std::abs(feats.at(int(f), feats.cols - 1) - heron) < 1e-6);
  }
}

TEST_CASE("face features: rows are permutation-equivariant") {
  DiscreteMesh d = tetrahedron();
  FaceFeatureMatrix base = compute_face_features(d, 4);
  DiscreteMesh swapped = d;
  std::swap(swapped.faces[0], swapped.faces[2]);
  FaceFeatureMatrix moved = compute_face_features(swapped, 4);
  for (int c = 0; c < base.cols; ++c) {
    CHECK(moved.at(2, c) == base.at(0, c));
    CHECK(moved.at(0, c) == base.at(2, c));
    CHECK(moved.at(1, c) == base.at(1, c));
  }
}

TEST_CASE("face graph: non-manifold edge connects all incident pairs") {
  DiscreteMesh d;
  d.vertices = {{0, 0, 0}, {50, 0, 0}, {0, 50, 10}, {0, 50, 90}, {50, 50, 50}};
  d.faces = {{0, 1, 2}, {0, 1, 3}, {0, 1, 4}};  // edge (0,1) shared by 3 faces
  FaceGraph g = build_face_graph(d);
  CHECK(g.edges.size() == 3);
  for (const auto& nb : g.neighbors) CHECK(nb.size() == 2);
}
