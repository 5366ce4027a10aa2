#pragma once
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshgpt {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
};

using Face = std::array<int, 3>;
using BinVertex = std::array<int, 3>;  // x,y,z bin indices in [0,128)

// Triangle mesh in continuous model space. Indices are 0-based; OBJ I/O
// converts from the 1-based file convention.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
};

// Mesh with vertices snapped to the 128^3 coordinate grid. Produced from a
// normalized Mesh by discretize(); the canonical face sequence and all
// training targets live in this representation.
struct DiscreteMesh {
  std::vector<BinVertex> vertices;
  std::vector<Face> faces;
};

constexpr int kCoordBins = 128;

class MeshError : public std::runtime_error {
 public:
  explicit MeshError(const std::string& what) : std::runtime_error(what) {}
};

// Throws MeshError on out-of-range or repeated face indices.
void validate(const Mesh& mesh);

// ASCII Wavefront OBJ. Polygons are fan-triangulated, negative indices are
// resolved against the running vertex count, texture/normal sub-indices are
// ignored. Parse errors carry the 1-based line number.
Mesh load_obj(const std::string& path);
void save_obj(const Mesh& mesh, const std::string& path);

// Center the bounding box at the origin and scale the longest side to unit
// length. Throws MeshError for empty or zero-extent meshes.
Mesh normalize(const Mesh& mesh);

// bin = clamp(floor((x + 0.5) * 128), 0, 127). Vertices that land on the
// same bin triple are merged, faces re-indexed, degenerate faces dropped.
// Requires coordinates in [-0.5, 0.5] (1e-6 slack).
DiscreteMesh discretize(const Mesh& mesh);

// Bin centers: coord = (bin + 0.5)/128 - 0.5.
Mesh undiscretize(const DiscreteMesh& dmesh);
double bin_center(int bin);

// Deterministic sequencing: merge bin-identical vertices, sort vertices by
// (z, y, x), rotate each face so the smallest index leads (winding kept),
// sort faces by their ascending index triple. Idempotent and invariant to
// input vertex/face permutations and cyclic face rotations.
DiscreteMesh canonicalize(const DiscreteMesh& dmesh);

// Weld vertices that share an epsilon-sized grid cell (exact duplicates for
// epsilon = 0); re-index faces and drop ones that became degenerate.
Mesh merge_vertices(const Mesh& mesh, double epsilon);

// Per-face 9-bin rows (v0.xyz, v1.xyz, v2.xyz) in stored face order.
std::vector<std::array<int, 9>> face_bins(const DiscreteMesh& dmesh);

// Inverse of face_bins: soup mesh with exact-duplicate bins welded and
// degenerate faces dropped.
DiscreteMesh mesh_from_face_bins(const std::vector<std::array<int, 9>>& bins);

// Exact shape equality on bins and faces.
bool operator==(const DiscreteMesh& a, const DiscreteMesh& b);

}  // namespace meshgpt
