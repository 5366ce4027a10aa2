#pragma once
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "meshgpt/geometry.hpp"
#include "meshgpt/rng.hpp"

namespace meshgpt::testutil {

// Fresh scratch directory per test, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("meshgpt_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }

  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Random normalized mesh: vertices in [-0.5, 0.5]^3, random well-formed faces.
inline Mesh random_mesh(Rng& rng, int vertices, int faces) {
  Mesh m;
  for (int i = 0; i < vertices; ++i) {
    m.vertices.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                          rng.uniform(-0.5, 0.5)});
  }
  while (int(m.faces.size()) < faces) {
    int a = int(rng.index(vertices)), b = int(rng.index(vertices)), c = int(rng.index(vertices));
    if (a == b || b == c || a == c) continue;
    m.faces.push_back({a, b, c});
  }
  return m;
}

}  // namespace meshgpt::testutil
