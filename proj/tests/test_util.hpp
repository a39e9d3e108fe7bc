#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "aegis/common.hpp"
#include "aegis/geometry.hpp"

namespace testutil {

// Scratch directory that cleans up after itself.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path = std::filesystem::temp_directory_path() /
           ("aegis_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline aegis::RgbPointCloud random_cloud(int n, uint64_t seed, const std::string& room = "r0") {
  aegis::Rng rng(seed);
  aegis::RgbPointCloud c;
  c.room = room;
  c.pos.resize(n);
  c.color.resize(n);
  c.label.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) c.pos[i][a] = static_cast<float>(rng.uniform(0.0, 3.0));
    for (int a = 0; a < 3; ++a) c.color[i][a] = static_cast<uint8_t>(rng.uniform_int(256));
    c.label[i] = static_cast<uint8_t>(rng.uniform_int(8));
  }
  return c;
}

inline std::vector<int> random_permutation(int n, uint64_t seed) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  aegis::Rng rng(seed);
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.uniform_int(i + 1)]);
  return p;
}

inline aegis::RgbPointCloud permute_cloud(const aegis::RgbPointCloud& c, const std::vector<int>& p) {
  aegis::RgbPointCloud out;
  out.room = c.room;
  out.pos.resize(c.pos.size());
  out.color.resize(c.color.size());
  if (!c.label.empty()) out.label.resize(c.label.size());
  for (size_t i = 0; i < p.size(); ++i) {
    out.pos[i] = c.pos[p[i]];
    out.color[i] = c.color[p[i]];
    if (!c.label.empty()) out.label[i] = c.label[p[i]];
  }
  return out;
}

}  // namespace testutil
