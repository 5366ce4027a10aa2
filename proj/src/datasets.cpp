#include "meshgpt/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace meshgpt {

namespace {

// Corner order: bit 0 -> +x, bit 1 -> +y, bit 2 -> +z.
// Two triangles per side, outward winding.
constexpr int kBoxTris[12][3] = {
    {0, 2, 1}, {1, 2, 3},  // z-
    {4, 5, 6}, {5, 7, 6},  // z+
    {0, 1, 4}, {1, 5, 4},  // y-
    {2, 6, 3}, {3, 6, 7},  // y+
    {0, 4, 2}, {2, 4, 6},  // x-
    {1, 3, 5}, {3, 7, 5},  // x+
};

void append_hexahedron(Mesh& mesh, const std::array<Vec3, 8>& corners) {
  const int base = int(mesh.vertices.size());
  for (const Vec3& c : corners) mesh.vertices.push_back(c);
  for (const auto& t : kBoxTris) {
    mesh.faces.push_back({base + t[0], base + t[1], base + t[2]});
  }
}

std::array<Vec3, 8> box_corners(Vec3 center, Vec3 half) {
  std::array<Vec3, 8> c;
  for (int i = 0; i < 8; ++i) {
    c[i] = {center.x + (i & 1 ? half.x : -half.x), center.y + (i & 2 ? half.y : -half.y),
            center.z + (i & 4 ? half.z : -half.z)};
  }
  return c;
}

void append_box(Mesh& mesh, Vec3 center, Vec3 half) {
  append_hexahedron(mesh, box_corners(center, half));
}

// Truncated pyramid: rectangular bottom/top of different sizes, same corner
// topology as a box.
void append_frustum(Mesh& mesh, Vec3 center, double half_bottom, double half_top,
                    double half_height) {
  std::array<Vec3, 8> c;
  for (int i = 0; i < 8; ++i) {
    const double h = i & 4 ? half_top : half_bottom;
    c[i] = {center.x + (i & 1 ? h : -h), center.y + (i & 2 ? h : -h),
            center.z + (i & 4 ? half_height : -half_height)};
  }
  append_hexahedron(mesh, c);
}

Mesh make_box(Rng& rng) {
  Mesh m;
  append_box(m, {0, 0, 0},
             {rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)});
  return m;
}

Mesh make_table(Rng& rng) {
  Mesh m;
  const double w = rng.uniform(0.5, 1.0);   // half-width x
  const double d = rng.uniform(0.35, 0.8);  // half-depth y
  const double h = rng.uniform(0.5, 1.0);   // leg height
  const double top = rng.uniform(0.03, 0.08);
  const double leg = rng.uniform(0.03, 0.09);
  append_box(m, {0, 0, h + top}, {w, d, top});
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      append_box(m, {sx * (w - leg), sy * (d - leg), h / 2}, {leg, leg, h / 2});
    }
  }
  return m;
}

Mesh make_shelf(Rng& rng) {
  Mesh m;
  const int boards = 2 + int(rng.index(4));  // 2..5
  const double w = rng.uniform(0.5, 0.9);
  const double d = rng.uniform(0.25, 0.45);
  const double gap = rng.uniform(0.25, 0.45);
  const double t = rng.uniform(0.02, 0.05);
  const double side = rng.uniform(0.02, 0.05);
  const double height = boards * gap;
  for (int b = 0; b < boards; ++b) {
    append_box(m, {0, 0, (b + 0.5) * gap}, {w, d, t});
  }
  append_box(m, {-(w + side), 0, height / 2}, {side, d, height / 2});
  append_box(m, {w + side, 0, height / 2}, {side, d, height / 2});
  return m;
}

Mesh make_lamp(Rng& rng) {
  Mesh m;
  const double base_r = rng.uniform(0.25, 0.45);
  const double base_h = rng.uniform(0.03, 0.08);
  const double post_r = rng.uniform(0.02, 0.06);
  const double post_h = rng.uniform(0.5, 1.0);
  const double shade_r = rng.uniform(0.2, 0.4);
  const double shade_top = shade_r * rng.uniform(0.4, 0.8);
  const double shade_h = rng.uniform(0.12, 0.3);
  append_box(m, {0, 0, base_h}, {base_r, base_r, base_h});
  append_box(m, {0, 0, 2 * base_h + post_h / 2}, {post_r, post_r, post_h / 2});
  append_frustum(m, {0, 0, 2 * base_h + post_h + shade_h}, shade_r, shade_top, shade_h);
  return m;
}

}  // namespace

Mesh synthetic_mesh(const std::string& family, Rng& rng) {
  Mesh m;
  if (family == "box") {
    m = make_box(rng);
  } else if (family == "table") {
    m = make_table(rng);
  } else if (family == "shelf") {
    m = make_shelf(rng);
  } else if (family == "lamp") {
    m = make_lamp(rng);
  } else {
    throw MeshError("unknown synthetic family '" + family + "'");
  }
  return normalize(m);
}

std::vector<Mesh> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.families.empty()) throw MeshError("generate_synthetic: no families");
  std::vector<Mesh> out;
  Rng root(spec.seed);
  for (int i = 0; i < spec.count; ++i) {
    Rng per_mesh = root.fork(uint64_t(i));
    const std::string& family = spec.families[size_t(i) % spec.families.size()];
    out.push_back(synthetic_mesh(family, per_mesh));
  }
  return out;
}

Mesh augment(const Mesh& mesh, uint64_t seed) {
  Rng rng(seed);
  Mesh out = mesh;
  const double sx = rng.uniform(0.75, 1.25);
  const double sy = rng.uniform(0.75, 1.25);
  const double sz = rng.uniform(0.75, 1.25);
  Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
  for (Vec3& v : out.vertices) {
    v = {v.x * sx, v.y * sy, v.z * sz};
    lo.x = std::min(lo.x, v.x); lo.y = std::min(lo.y, v.y); lo.z = std::min(lo.z, v.z);
    hi.x = std::max(hi.x, v.x); hi.y = std::max(hi.y, v.y); hi.z = std::max(hi.z, v.z);
  }
  const double side = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  if (side <= 0.0) throw MeshError("augment: zero extent");
  const double rescale = 1.0 / side;
  for (Vec3& v : out.vertices) v = v * rescale;
  lo = lo * rescale;
  hi = hi * rescale;

  // Jitter each axis, clamped so the bounding box stays in [-0.5, 0.5].
  auto jitter = [&rng](double lo_c, double hi_c) {
    double j = rng.uniform(-0.1, 0.1);
    return std::clamp(j, -0.5 - lo_c, 0.5 - hi_c);
  };
  const Vec3 shift = {jitter(lo.x, hi.x), jitter(lo.y, hi.y), jitter(lo.z, hi.z)};
  for (Vec3& v : out.vertices) v = v + shift;
  return out;
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& which) const {
  std::vector<ManifestEntry> out;
  for (const ManifestEntry& e : entries) {
    if (e.split == which) out.push_back(e);
  }
  return out;
}

DatasetManifest build_manifest(const std::vector<std::string>& paths,
                               const std::vector<std::string>& families,
                               const std::vector<int>& face_counts, int max_faces,
                               double split_ratio, uint64_t seed) {
  if (paths.size() != families.size() || paths.size() != face_counts.size()) {
    throw MeshError("build_manifest: input size mismatch");
  }
  std::vector<size_t> keep;
  for (size_t i = 0; i < paths.size(); ++i) {
    if (face_counts[i] <= max_faces) keep.push_back(i);
  }
  // Seeded Fisher-Yates shuffle, then the leading fraction trains.
  Rng rng(seed);
  for (size_t i = keep.size(); i > 1; --i) {
    std::swap(keep[i - 1], keep[size_t(rng.index(int64_t(i)))]);
  }
  const size_t train_count = size_t(std::floor(double(keep.size()) * split_ratio));
  DatasetManifest m;
  for (size_t r = 0; r < keep.size(); ++r) {
    const size_t i = keep[r];
    m.entries.push_back(
        {paths[i], families[i], face_counts[i], r < train_count ? "train" : "test"});
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MeshError("cannot write manifest " + path);
  out << "#meshgpt-manifest v1\n";
  for (const ManifestEntry& e : m.entries) {
    out << e.path << '\t' << e.family << '\t' << e.faces << '\t' << e.split << '\n';
  }
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open manifest " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("#meshgpt-manifest v1", 0) != 0) {
    throw MeshError(path + ": missing '#meshgpt-manifest v1' header");
  }
  DatasetManifest m;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestEntry e;
    std::string faces;
    if (!std::getline(ss, e.path, '\t') || !std::getline(ss, e.family, '\t') ||
        !std::getline(ss, faces, '\t') || !std::getline(ss, e.split)) {
      throw MeshError(path + ":" + std::to_string(lineno) + ": malformed manifest line");
    }
    e.faces = std::stoi(faces);
    if (e.split != "train" && e.split != "test") {
      throw MeshError(path + ":" + std::to_string(lineno) + ": bad split '" + e.split + "'");
    }
    m.entries.push_back(e);
  }
  return m;
}

std::string manifest_dir(const std::string& manifest_path) {
  size_t slash = manifest_path.find_last_of('/');
  return slash == std::string::npos ? std::string(".") : manifest_path.substr(0, slash);
}

}  // namespace meshgpt
