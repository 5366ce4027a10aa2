#include "meshgpt/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace meshgpt {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

void validate(const Mesh& mesh) {
  const int n = int(mesh.vertices.size());
  for (size_t i = 0; i < mesh.faces.size(); ++i) {
    const Face& f = mesh.faces[i];
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= n) {
        throw MeshError("face " + std::to_string(i) + ": vertex index " +
                        std::to_string(f[k]) + " out of range [0, " +
                        std::to_string(n) + ")");
      }
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      throw MeshError("face " + std::to_string(i) + " is degenerate");
    }
  }
}

namespace {

bool parse_double(const std::string& tok, double& out) {
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

// "7/2/3" -> 7; "7//3" -> 7; "-1" -> -1.
bool parse_face_index(const std::string& tok, long& out) {
  size_t slash = tok.find('/');
  std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
  auto res = std::from_chars(head.data(), head.data() + head.size(), out);
  return res.ec == std::errc() && res.ptr == head.data() + head.size();
}

[[noreturn]] void parse_fail(const std::string& path, int line,
                             const std::string& msg) {
  throw MeshError(path + ":" + std::to_string(line) + ": " + msg);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Mesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open " + path);
  Mesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream iss(line);
    std::string tag;
    if (!(iss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      std::string sx, sy, sz;
      Vec3 v;
      if (!(iss >> sx >> sy >> sz) || !parse_double(sx, v.x) ||
          !parse_double(sy, v.y) || !parse_double(sz, v.z)) {
        parse_fail(path, lineno, "malformed vertex record");
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (iss >> tok) {
        long raw;
        if (!parse_face_index(tok, raw) || raw == 0) {
          parse_fail(path, lineno, "malformed face index '" + tok + "'");
        }
        // Indices reference vertices already defined at this point; negative
        // values count back from the most recent one.
        long resolved = raw > 0 ? raw - 1 : long(mesh.vertices.size()) + raw;
        if (resolved < 0 || resolved >= long(mesh.vertices.size())) {
          parse_fail(path, lineno,
                     "vertex index " + std::to_string(raw) + " out of range");
        }
        idx.push_back(int(resolved));
      }
      if (idx.size() < 3) parse_fail(path, lineno, "face with fewer than 3 vertices");
      for (size_t k = 1; k + 1 < idx.size(); ++k) {
        mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
      }
    }
    // vn/vt/o/g/s/usemtl/mtllib records are ignored.
  }
  return mesh;
}

void save_obj(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MeshError("cannot write " + path);
  std::string buf;
  for (const Vec3& v : mesh.vertices) {
    buf += "v ";
    buf += format_double(v.x);
    buf += ' ';
    buf += format_double(v.y);
    buf += ' ';
    buf += format_double(v.z);
    buf += '\n';
  }
  for (const Face& f : mesh.faces) {
    buf += "f ";
    buf += std::to_string(f[0] + 1);
    buf += ' ';
    buf += std::to_string(f[1] + 1);
    buf += ' ';
    buf += std::to_string(f[2] + 1);
    buf += '\n';
  }
  out << buf;
  if (!out) throw MeshError("write failed for " + path);
}

Mesh normalize(const Mesh& mesh) {
  if (mesh.vertices.empty()) throw MeshError("normalize: empty mesh");
  Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const Vec3& v : mesh.vertices) {
    lo.x = std::min(lo.x, v.x); lo.y = std::min(lo.y, v.y); lo.z = std::min(lo.z, v.z);
    hi.x = std::max(hi.x, v.x); hi.y = std::max(hi.y, v.y); hi.z = std::max(hi.z, v.z);
  }
  Vec3 center = (lo + hi) * 0.5;
  double side = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  if (side <= 0.0) throw MeshError("normalize: mesh has zero extent");
  Mesh out;
  out.vertices.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) out.vertices.push_back((v - center) * (1.0 / side));
  out.faces = mesh.faces;
  return out;
}

namespace {

struct BinKeyHash {
  size_t operator()(const BinVertex& b) const {
    return size_t(b[0]) * 1000003u + size_t(b[1]) * 8191u + size_t(b[2]);
  }
};

// Weld exact-duplicate bin vertices (first occurrence wins), re-index faces,
// drop degenerates. Shared by discretize/canonicalize/mesh_from_face_bins.
DiscreteMesh weld_bins(const std::vector<BinVertex>& verts,
                       const std::vector<Face>& faces) {
  DiscreteMesh out;
  std::unordered_map<BinVertex, int, BinKeyHash> seen;
  std::vector<int> remap(verts.size());
  for (size_t i = 0; i < verts.size(); ++i) {
    auto [it, inserted] = seen.emplace(verts[i], int(out.vertices.size()));
    if (inserted) out.vertices.push_back(verts[i]);
    remap[i] = it->second;
  }
  for (const Face& f : faces) {
    Face g = {remap[f[0]], remap[f[1]], remap[f[2]]};
    if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
    out.faces.push_back(g);
  }
  return out;
}

}  // namespace

DiscreteMesh discretize(const Mesh& mesh) {
  std::vector<BinVertex> bins;
  bins.reserve(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    for (double c : {v.x, v.y, v.z}) {
      if (c < -0.5 - 1e-6 || c > 0.5 + 1e-6) {
        throw MeshError("discretize: coordinate " + std::to_string(c) +
                        " outside [-0.5, 0.5]; normalize first");
      }
    }
    auto to_bin = [](double c) {
      int b = int(std::floor((c + 0.5) * kCoordBins));
      return std::clamp(b, 0, kCoordBins - 1);
    };
    bins.push_back({to_bin(v.x), to_bin(v.y), to_bin(v.z)});
  }
  return weld_bins(bins, mesh.faces);
}

double bin_center(int bin) { return (bin + 0.5) / kCoordBins - 0.5; }

Mesh undiscretize(const DiscreteMesh& dmesh) {
  Mesh out;
  out.vertices.reserve(dmesh.vertices.size());
  for (const BinVertex& b : dmesh.vertices) {
    out.vertices.push_back({bin_center(b[0]), bin_center(b[1]), bin_center(b[2])});
  }
  out.faces = dmesh.faces;
  return out;
}

DiscreteMesh canonicalize(const DiscreteMesh& dmesh) {
  DiscreteMesh welded = weld_bins(dmesh.vertices, dmesh.faces);

  // Sort vertices by (z, y, x); keys are unique after welding.
  const size_t nv = welded.vertices.size();
  std::vector<int> order(nv);
  for (size_t i = 0; i < nv; ++i) order[i] = int(i);
  auto zyx_less = [&](int a, int b) {
    const BinVertex& u = welded.vertices[a];
    const BinVertex& v = welded.vertices[b];
    if (u[2] != v[2]) return u[2] < v[2];
    if (u[1] != v[1]) return u[1] < v[1];
    return u[0] < v[0];
  };
  std::sort(order.begin(), order.end(), zyx_less);
  std::vector<int> rank(nv);
  for (size_t i = 0; i < nv; ++i) rank[order[i]] = int(i);

  DiscreteMesh out;
  out.vertices.resize(nv);
  for (size_t i = 0; i < nv; ++i) out.vertices[i] = welded.vertices[order[i]];

  out.faces.reserve(welded.faces.size());
  for (const Face& f : welded.faces) {
    Face g = {rank[f[0]], rank[f[1]], rank[f[2]]};
    // Rotate so the smallest index leads; cyclic only, winding preserved.
    int lead = 0;
    if (g[1] < g[lead]) lead = 1;
    if (g[2] < g[lead]) lead = 2;
    out.faces.push_back({g[lead], g[(lead + 1) % 3], g[(lead + 2) % 3]});
  }

  auto sorted_key = [](const Face& f) {
    Face k = f;
    std::sort(k.begin(), k.end());
    return k;
  };
  std::sort(out.faces.begin(), out.faces.end(), [&](const Face& a, const Face& b) {
    Face ka = sorted_key(a), kb = sorted_key(b);
    if (ka != kb) return ka < kb;
    return a < b;  // same vertex set, opposite winding: keep the order total
  });
  return out;
}

Mesh merge_vertices(const Mesh& mesh, double epsilon) {
  if (epsilon < 0) throw MeshError("merge_vertices: negative epsilon");
  Mesh out;
  struct CellHash {
    size_t operator()(const std::array<int64_t, 3>& c) const {
      uint64_t h = 1469598103934665603ull;
      for (int64_t v : c) {
        h ^= uint64_t(v);
        h *= 1099511628211ull;
      }
      return size_t(h);
    }
  };
  std::unordered_map<std::array<int64_t, 3>, int, CellHash> cells;
  std::vector<int> remap(mesh.vertices.size());
  auto cell_of = [epsilon](const Vec3& v) -> std::array<int64_t, 3> {
    if (epsilon == 0.0) {
      // Exact-duplicate merge: key on the bit patterns.
      std::array<int64_t, 3> c;
      std::memcpy(&c[0], &v.x, 8);
      std::memcpy(&c[1], &v.y, 8);
      std::memcpy(&c[2], &v.z, 8);
      return c;
    }
    return {int64_t(std::floor(v.x / epsilon)), int64_t(std::floor(v.y / epsilon)),
            int64_t(std::floor(v.z / epsilon))};
  };
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    auto [it, inserted] = cells.emplace(cell_of(mesh.vertices[i]), int(out.vertices.size()));
    if (inserted) out.vertices.push_back(mesh.vertices[i]);
    remap[i] = it->second;
  }
  for (const Face& f : mesh.faces) {
    Face g = {remap[f[0]], remap[f[1]], remap[f[2]]};
    if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
    out.faces.push_back(g);
  }
  return out;
}

std::vector<std::array<int, 9>> face_bins(const DiscreteMesh& dmesh) {
  std::vector<std::array<int, 9>> rows;
  rows.reserve(dmesh.faces.size());
  for (const Face& f : dmesh.faces) {
    std::array<int, 9> row;
    for (int j = 0; j < 3; ++j) {
      const BinVertex& v = dmesh.vertices[f[j]];
      row[j * 3 + 0] = v[0];
      row[j * 3 + 1] = v[1];
      row[j * 3 + 2] = v[2];
    }
    rows.push_back(row);
  }
  return rows;
}

DiscreteMesh mesh_from_face_bins(const std::vector<std::array<int, 9>>& bins) {
  std::vector<BinVertex> verts;
  std::vector<Face> faces;
  verts.reserve(bins.size() * 3);
  for (size_t i = 0; i < bins.size(); ++i) {
    const auto& row = bins[i];
    for (int j = 0; j < 3; ++j) {
      verts.push_back({row[j * 3 + 0], row[j * 3 + 1], row[j * 3 + 2]});
    }
    faces.push_back({int(i * 3), int(i * 3 + 1), int(i * 3 + 2)});
  }
  return weld_bins(verts, faces);
}

bool operator==(const DiscreteMesh& a, const DiscreteMesh& b) {
  return a.vertices == b.vertices && a.faces == b.faces;
}

}  // namespace meshgpt
