#pragma once
#include <string>
#include <vector>

#include "meshgpt/geometry.hpp"
#include "meshgpt/rng.hpp"

namespace meshgpt {

// Procedural stand-ins for a furniture-style mesh corpus: every mesh is a
// closed union of triangulated hexahedra (boxes, warped boxes for lamp
// shades), normalized, 12 to ~200 faces.
struct SyntheticSpec {
  std::vector<std::string> families;  // subset of {box, table, shelf, lamp}
  int count = 16;
  uint64_t seed = 1;
};

Mesh synthetic_mesh(const std::string& family, Rng& rng);
std::vector<Mesh> generate_synthetic(const SyntheticSpec& spec);

// Per-axis scale in [0.75, 1.25], renormalize the longest side to 1, then
// per-axis jitter in [-0.1, 0.1] clamped so the mesh stays inside
// [-0.5, 0.5]^3. Topology and face count are untouched.
Mesh augment(const Mesh& mesh, uint64_t seed);

struct ManifestEntry {
  std::string path;
  std::string family;
  int faces = 0;
  std::string split;  // train | test
};

// Line-oriented text, header "#meshgpt-manifest v1", one tab-separated
// `path family faces split` entry per line.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(const std::string& which) const;
};

DatasetManifest build_manifest(const std::vector<std::string>& paths,
                               const std::vector<std::string>& families,
                               const std::vector<int>& face_counts, int max_faces,
                               double split_ratio, uint64_t seed);

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Manifest entries store paths relative to the manifest file.
std::string manifest_dir(const std::string& manifest_path);

}  // namespace meshgpt
