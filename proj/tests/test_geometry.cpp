#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "meshgpt/geometry.hpp"
#include "test_util.hpp"

using namespace meshgpt;
using testutil::TempDir;

TEST_CASE("load_obj: minimal file") {
  TempDir tmp("obj_min");
  testutil::write_file(tmp.file("m.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  Mesh m = load_obj(tmp.file("m.obj"));
  REQUIRE(m.vertices.size() == 3);
  REQUIRE(m.faces.size() == 1);
  CHECK(m.faces[0] == Face{0, 1, 2});
  CHECK(m.vertices[1].x == 1.0);
}

TEST_CASE("load_obj: out-of-range index reports the line") {
  TempDir tmp("obj_oor");
  testutil::write_file(tmp.file("m.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
  try {
    load_obj(tmp.file("m.obj"));
    FAIL("expected MeshError");
  } catch (const MeshError& e) {
    CHECK(std::string(e.what()).find(":4") != std::string::npos);
    CHECK(std::string(e.what()).find("out of range") != std::string::npos);
  }
}

TEST_CASE("load_obj: quad fan-triangulates") {
  TempDir tmp("obj_quad");
  testutil::write_file(tmp.file("m.obj"),
                       "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  Mesh m = load_obj(tmp.file("m.obj"));
  REQUIRE(m.faces.size() == 2);
  CHECK(m.faces[0] == Face{0, 1, 2});
  CHECK(m.faces[1] == Face{0, 2, 3});
}

TEST_CASE("load_obj: negative indices and slash forms") {
  TempDir tmp("obj_neg");
  testutil::write_file(tmp.file("m.obj"),
                       "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1 -2/2/3 -1//4\n");
  Mesh m = load_obj(tmp.file("m.obj"));
  REQUIRE(m.faces.size() == 1);
  CHECK(m.faces[0] == Face{0, 1, 2});
}

TEST_CASE("load_obj: malformed vertex errors") {
  TempDir tmp("obj_bad");
  testutil::write_file(tmp.file("m.obj"), "v 0 abc 0\n");
  CHECK_THROWS_AS(load_obj(tmp.file("m.obj")), MeshError);
}

TEST_CASE("save_obj round-trip on a random mesh") {
  TempDir tmp("obj_rt");
  Rng rng(7);
  Mesh m = testutil::random_mesh(rng, 40, 100);
  save_obj(m, tmp.file("m.obj"));
  Mesh back = load_obj(tmp.file("m.obj"));
  REQUIRE(back.vertices.size() == m.vertices.size());
  REQUIRE(back.faces == m.faces);
  for (size_t i = 0; i < m.vertices.size(); ++i) {
    CHECK(std::abs(back.vertices[i].x - m.vertices[i].x) < 1e-6);
    CHECK(std::abs(back.vertices[i].y - m.vertices[i].y) < 1e-6);
    CHECK(std::abs(back.vertices[i].z - m.vertices[i].z) < 1e-6);
  }
}

TEST_CASE("save_obj: empty mesh round-trips to empty") {
  TempDir tmp("obj_empty");
  save_obj(Mesh{}, tmp.file("m.obj"));
  Mesh back = load_obj(tmp.file("m.obj"));
  CHECK(back.vertices.empty());
  CHECK(back.faces.empty());
}

TEST_CASE("validate catches bad faces") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  CHECK_NOTHROW(validate(m));
  m.faces.push_back({0, 1, 5});
  CHECK_THROWS_AS(validate(m), MeshError);
  m.faces = {{0, 1, 1}};
  CHECK_THROWS_AS(validate(m), MeshError);
}

TEST_CASE("normalize: unit cube at [0,1]^3 lands on [-0.5,0.5]^3") {
  Mesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.push_back({double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1)});
  }
  Mesh n = normalize(m);
  for (const Vec3& v : n.vertices) {
    CHECK(std::abs(std::abs(v.x) - 0.5) < 1e-9);
    CHECK(std::abs(std::abs(v.y) - 0.5) < 1e-9);
    CHECK(std::abs(std::abs(v.z) - 0.5) < 1e-9);
  }
}

TEST_CASE("normalize: extents (2,1,1) scale to (1,0.5,0.5)") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {2, 1, 1}};
  Mesh n = normalize(m);
  CHECK(std::abs((n.vertices[1].x - n.vertices[0].x) - 1.0) < 1e-12);
  CHECK(std::abs((n.vertices[1].y - n.vertices[0].y) - 0.5) < 1e-12);
  CHECK(std::abs((n.vertices[1].z - n.vertices[0].z) - 0.5) < 1e-12);
}

TEST_CASE("normalize: idempotent and scale/translation covariant") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Mesh m = testutil::random_mesh(rng, 20, 30);
    Mesh n1 = normalize(m);
    Mesh n2 = normalize(n1);
    const double s = rng.uniform(0.1, 50.0);
    const Vec3 t = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    Mesh moved = m;
    for (Vec3& v : moved.vertices) v = v * s + t;
    Mesh n3 = normalize(moved);
    for (size_t i = 0; i < m.vertices.size(); ++i) {
      CHECK(std::abs(n1.vertices[i].x - n2.vertices[i].x) < 1e-6);
      CHECK(std::abs(n1.vertices[i].x - n3.vertices[i].x) < 1e-6);
      CHECK(std::abs(n1.vertices[i].y - n3.vertices[i].y) < 1e-6);
      CHECK(std::abs(n1.vertices[i].z - n3.vertices[i].z) < 1e-6);
    }
  }
}

TEST_CASE("normalize: zero extent rejected") {
  Mesh m;
  m.vertices = {{1, 1, 1}, {1, 1, 1}};
  CHECK_THROWS_AS(normalize(m), MeshError);
  CHECK_THROWS_AS(normalize(Mesh{}), MeshError);
}

TEST_CASE("discretize: endpoint and midpoint bins") {
  Mesh m;
  m.vertices = {{-0.5, 0.0, 0.5}, {0.25, -0.25, 0.1}, {0.3, 0.4, -0.2}};
  m.faces = {{0, 1, 2}};
  DiscreteMesh d = discretize(m);
  CHECK(d.vertices[0][0] == 0);    // x = -0.5
  CHECK(d.vertices[0][1] == 64);   // x = 0.0
  CHECK(d.vertices[0][2] == 127);  // x = +0.5
}

TEST_CASE("discretize: bin-identical vertices merge and degenerate faces drop") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1e-4, 1e-4, 1e-4}, {0.3, 0, 0}, {0, 0.3, 0}};
  m.faces = {{0, 1, 2}, {0, 2, 3}};  // first face collapses after merging
  DiscreteMesh d = discretize(m);
  CHECK(d.vertices.size() == 3);
  CHECK(d.faces.size() == 1);
}

TEST_CASE("discretize: rejects unnormalized input") {
  Mesh m;
  m.vertices = {{0.7, 0, 0}};
  CHECK_THROWS_AS(discretize(m), MeshError);
}

TEST_CASE("undiscretize: bin centers") {
  DiscreteMesh d;
  d.vertices = {{0, 64, 127}};
  Mesh m = undiscretize(d);
  CHECK(m.vertices[0].x == doctest::Approx(-0.49609375).epsilon(1e-12));
  CHECK(m.vertices[0].y == doctest::Approx(0.00390625).epsilon(1e-12));
}

TEST_CASE("discretize/undiscretize: bins round-trip exactly, coords move <= 1/256") {
  Rng rng(11);
  for (int rep = 0; rep < 30; ++rep) {
    Mesh m = testutil::random_mesh(rng, 30, 40);
    DiscreteMesh d = discretize(m);
    DiscreteMesh d2 = discretize(undiscretize(d));
    CHECK(d2 == d);
    // per-coordinate displacement bound for the vertices that survived
    Mesh centers = undiscretize(discretize(m));
    for (const Vec3& v : m.vertices) {
      double best = 1e9;
      for (const Vec3& c : centers.vertices) {
        best = std::min(best, std::max({std::abs(v.x - c.x), std::abs(v.y - c.y),
                                        std::abs(v.z - c.z)}));
      }
      CHECK(best <= 1.0 / 256.0 + 1e-12);
    }
  }
}

namespace {

DiscreteMesh permuted(const DiscreteMesh& d, Rng& rng) {
  std::vector<int> perm(d.vertices.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = int(i);
  for (size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[size_t(rng.index(int64_t(i)))]);
  }
  DiscreteMesh out;
  out.vertices.resize(d.vertices.size());
  for (size_t i = 0; i < d.vertices.size(); ++i) out.vertices[size_t(perm[i])] = d.vertices[i];
  out.faces = d.faces;
  for (Face& f : out.faces) {
    for (int& v : f) v = perm[size_t(v)];
    const int rot = int(rng.index(3));
    std::rotate(f.begin(), f.begin() + rot, f.end());
  }
  for (size_t i = out.faces.size(); i > 1; --i) {
    std::swap(out.faces[i - 1], out.faces[size_t(rng.index(int64_t(i)))]);
  }
  return out;
}

}  // namespace

TEST_CASE("canonicalize: vertex sort by (z,y,x) and face rotation") {
  DiscreteMesh d;
  // (x,y,z) bins whose (z,y,x) keys are already ascending
  d.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  d.faces = {{3, 1, 2}};
  DiscreteMesh c = canonicalize(d);
  CHECK(c.vertices == d.vertices);  // order preserved
  CHECK(c.faces[0] == Face{1, 2, 3});  // cyclic rotation, winding kept
}

TEST_CASE("canonicalize: faces sort by lowest index") {
  DiscreteMesh d;
  d.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  d.faces = {{1, 2, 3}, {0, 1, 2}};
  DiscreteMesh c = canonicalize(d);
  CHECK(c.faces[0] == Face{0, 1, 2});
  CHECK(c.faces[1] == Face{1, 2, 3});
}

TEST_CASE("canonicalize: idempotent and permutation/rotation invariant") {
  Rng rng(21);
  for (int rep = 0; rep < 200; ++rep) {
    Mesh m = testutil::random_mesh(rng, 25, 50);
    DiscreteMesh d = discretize(m);
    DiscreteMesh c = canonicalize(d);
    CHECK(canonicalize(c) == c);
    DiscreteMesh p = permuted(d, rng);
    CHECK(canonicalize(p) == c);
  }
}

TEST_CASE("merge_vertices: duplicated soup endpoints weld") {
  // two triangles sharing an edge, second copy of the shared edge offset 1e-5
  Mesh soup;
  soup.vertices = {{0, 0, 0}, {0.3, 0, 0}, {0, 0.3, 0},
                   {0.3 + 1e-5, 1e-5, 1e-5}, {1e-5, 0.3 + 1e-5, 1e-5}, {0.3, 0.3, 0}};
  soup.faces = {{0, 1, 2}, {3, 5, 4}};
  Mesh merged = merge_vertices(soup, 1e-3);
  CHECK(merged.vertices.size() == 4);
  CHECK(merged.faces.size() == 2);
}

TEST_CASE("merge_vertices: epsilon 0 merges exact duplicates only") {
  Mesh soup;
  soup.vertices = {{0, 0, 0}, {0, 0, 0}, {1e-9, 0, 0}, {0, 1, 0}, {1, 0, 0}};
  soup.faces = {{0, 3, 4}, {1, 4, 3}, {2, 3, 4}};
  Mesh merged = merge_vertices(soup, 0.0);
  CHECK(merged.vertices.size() == 4);  // exact pair welds, 1e-9 neighbor survives
  CHECK(merged.faces.size() == 3);
}

TEST_CASE("merge_vertices: single triangle unchanged") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  Mesh merged = merge_vertices(m, 1e-3);
  CHECK(merged.vertices.size() == 3);
  CHECK(merged.faces == m.faces);
}

TEST_CASE("merge_vertices: vertex count never grows, geometry moves <= eps per axis") {
  Rng rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    Mesh m = testutil::random_mesh(rng, 40, 60);
    const double eps = rng.uniform(1e-4, 5e-2);
    Mesh merged = merge_vertices(m, eps);
    CHECK(merged.vertices.size() <= m.vertices.size());
    if (merged.faces.size() != m.faces.size()) continue;  // drops break alignment
    for (size_t f = 0; f < m.faces.size(); ++f) {
      // representative stays within the original's grid cell
      for (int k = 0; k < 3; ++k) {
        const Vec3& a = m.vertices[size_t(m.faces[f][k])];
        const Vec3& b = merged.vertices[size_t(merged.faces[f][k])];
        CHECK(std::abs(a.x - b.x) <= eps + 1e-12);
        CHECK(std::abs(a.y - b.y) <= eps + 1e-12);
        CHECK(std::abs(a.z - b.z) <= eps + 1e-12);
      }
    }
  }
}

TEST_CASE("face_bins round-trips through mesh_from_face_bins") {
  Rng rng(41);
  Mesh m = testutil::random_mesh(rng, 20, 30);
  DiscreteMesh d = canonicalize(discretize(m));
  DiscreteMesh rebuilt = mesh_from_face_bins(face_bins(d));
  CHECK(face_bins(rebuilt) == face_bins(d));
}
