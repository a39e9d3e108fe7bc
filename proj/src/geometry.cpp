#include "aegis/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>
#include <unordered_map>

namespace aegis {

namespace {

struct CellKey {
  int64_t x, y, z;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellHash {
  size_t operator()(const CellKey& k) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint64_t v : {static_cast<uint64_t>(k.x), static_cast<uint64_t>(k.y), static_cast<uint64_t>(k.z)}) {
      h ^= v;
      h *= 0x100000001b3ull;
      h = split_mix64(h);
    }
    return static_cast<size_t>(h);
  }
};

int64_t grid_coord(double v, double cell) { return static_cast<int64_t>(std::floor(v / cell)); }

double sq_dist(const Vec3f& a, const Vec3f& b) {
  double dx = static_cast<double>(a[0]) - b[0];
  double dy = static_cast<double>(a[1]) - b[1];
  double dz = static_cast<double>(a[2]) - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

std::vector<int> canonical_order(const RgbPointCloud& cloud) {
  std::vector<int> order(cloud.pos.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](int i) {
    uint8_t r = 0, g = 0, b = 0, l = 255;
    if (!cloud.color.empty()) {
      r = cloud.color[i][0];
      g = cloud.color[i][1];
      b = cloud.color[i][2];
    }
    if (!cloud.label.empty()) l = cloud.label[i];
    return std::make_tuple(cloud.pos[i][0], cloud.pos[i][1], cloud.pos[i][2], r, g, b, l);
  };
  std::sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
  return order;
}

RgbPointCloud apply_order(const RgbPointCloud& cloud, const std::vector<int>& order) {
  RgbPointCloud out;
  out.room = cloud.room;
  out.pos.reserve(order.size());
  for (int i : order) out.pos.push_back(cloud.pos[i]);
  if (!cloud.color.empty()) {
    out.color.reserve(order.size());
    for (int i : order) out.color.push_back(cloud.color[i]);
  }
  if (!cloud.label.empty()) {
    out.label.reserve(order.size());
    for (int i : order) out.label.push_back(cloud.label[i]);
  }
  return out;
}

GridSubsample grid_subsample(const std::vector<Vec3f>& pos, double cell) {
  if (cell <= 0.0) fail(ErrorKind::usage, "grid_subsample: cell size must be positive");
  if (pos.empty()) fail(ErrorKind::degenerate, "grid_subsample: empty cloud");

  // std::map keeps voxels in lexicographic coordinate order.
  std::map<std::tuple<int64_t, int64_t, int64_t>, std::vector<int>> voxels;
  for (size_t i = 0; i < pos.size(); ++i) {
    auto key = std::make_tuple(grid_coord(pos[i][0], cell), grid_coord(pos[i][1], cell),
                               grid_coord(pos[i][2], cell));
    voxels[key].push_back(static_cast<int>(i));
  }

  GridSubsample out;
  out.centers.reserve(voxels.size());
  out.counts.reserve(voxels.size());
  out.voxel_of.assign(pos.size(), -1);
  for (auto& [key, members] : voxels) {
    // Accumulate in position order so the centroid does not depend on the
    // order points arrived in.
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      return std::make_tuple(pos[a][0], pos[a][1], pos[a][2]) <
             std::make_tuple(pos[b][0], pos[b][1], pos[b][2]);
    });
    double sx = 0, sy = 0, sz = 0;
    for (int m : members) {
      sx += pos[m][0];
      sy += pos[m][1];
      sz += pos[m][2];
    }
    int row = static_cast<int>(out.centers.size());
    double inv = 1.0 / static_cast<double>(members.size());
    out.centers.push_back({static_cast<float>(sx * inv), static_cast<float>(sy * inv),
                           static_cast<float>(sz * inv)});
    out.counts.push_back(static_cast<int>(members.size()));
    for (int m : members) out.voxel_of[m] = row;
  }
  return out;
}

NeighborIndex radius_neighbors(const std::vector<Vec3f>& queries, const std::vector<Vec3f>& supports,
                               double radius, int cap) {
  if (radius <= 0.0) fail(ErrorKind::usage, "radius_neighbors: radius must be positive");
  if (cap <= 0) fail(ErrorKind::usage, "radius_neighbors: cap must be positive");
  if (supports.empty()) fail(ErrorKind::degenerate, "radius_neighbors: empty support cloud");

  std::unordered_map<CellKey, std::vector<int>, CellHash> grid;
  grid.reserve(supports.size());
  for (size_t i = 0; i < supports.size(); ++i) {
    CellKey k{grid_coord(supports[i][0], radius), grid_coord(supports[i][1], radius),
              grid_coord(supports[i][2], radius)};
    grid[k].push_back(static_cast<int>(i));
  }

  double r2 = radius * radius;
  std::vector<std::vector<int>> lists(queries.size());
  parallel_for(static_cast<int64_t>(queries.size()), 16, [&](int64_t lo, int64_t hi) {
    std::vector<std::pair<double, int>> cand;
    for (int64_t q = lo; q < hi; ++q) {
      cand.clear();
      CellKey base{grid_coord(queries[q][0], radius), grid_coord(queries[q][1], radius),
                   grid_coord(queries[q][2], radius)};
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dz = -1; dz <= 1; ++dz) {
            auto it = grid.find(CellKey{base.x + dx, base.y + dy, base.z + dz});
            if (it == grid.end()) continue;
            for (int s : it->second) {
              double d2 = sq_dist(queries[q], supports[s]);
              if (d2 <= r2) cand.emplace_back(d2, s);
            }
          }
      if (static_cast<int>(cand.size()) > cap) {
        std::sort(cand.begin(), cand.end());
        cand.resize(cap);
      }
      std::vector<int>& out = lists[q];
      out.reserve(cand.size());
      for (auto& [d2, s] : cand) out.push_back(s);
      std::sort(out.begin(), out.end());
    }
  });

  NeighborIndex idx;
  idx.offsets.resize(queries.size() + 1);
  idx.offsets[0] = 0;
  for (size_t q = 0; q < queries.size(); ++q)
    idx.offsets[q + 1] = idx.offsets[q] + static_cast<int>(lists[q].size());
  idx.items.reserve(idx.offsets.back());
  for (auto& l : lists) idx.items.insert(idx.items.end(), l.begin(), l.end());
  return idx;
}

std::vector<int> nearest_indices(const std::vector<Vec3f>& queries, const std::vector<Vec3f>& supports) {
  if (supports.empty()) fail(ErrorKind::degenerate, "nearest_indices: empty support cloud");
  std::vector<int> out(queries.size());
  parallel_for(static_cast<int64_t>(queries.size()), 64, [&](int64_t lo, int64_t hi) {
    for (int64_t q = lo; q < hi; ++q) {
      double best = sq_dist(queries[q], supports[0]);
      int arg = 0;
      for (size_t s = 1; s < supports.size(); ++s) {
        double d2 = sq_dist(queries[q], supports[s]);
        if (d2 < best) {
          best = d2;
          arg = static_cast<int>(s);
        }
      }
      out[q] = arg;
    }
  });
  return out;
}

std::vector<Vec3d> kernel_points(int count, double radius, uint64_t seed) {
  if (count < 1) fail(ErrorKind::usage, "kernel_points: count must be at least 1");
  if (radius <= 0.0) fail(ErrorKind::usage, "kernel_points: radius must be positive");

  std::vector<Vec3d> pts(count, Vec3d{0.0, 0.0, 0.0});
  Rng rng(seed);
  auto sample_ball = [&]() {
    while (true) {
      double x = rng.uniform(-1.0, 1.0), y = rng.uniform(-1.0, 1.0), z = rng.uniform(-1.0, 1.0);
      if (x * x + y * y + z * z <= 1.0) return Vec3d{x, y, z};
    }
  };
  for (int k = 1; k < count; ++k) pts[k] = sample_ball();

  // Inverse-square repulsion with a decaying step; the origin point stays put.
  double step = 0.03;
  for (int iter = 0; iter < 300; ++iter) {
    for (int i = 1; i < count; ++i) {
      double fx = 0, fy = 0, fz = 0;
      for (int j = 0; j < count; ++j) {
        if (j == i) continue;
        double dx = pts[i][0] - pts[j][0];
        double dy = pts[i][1] - pts[j][1];
        double dz = pts[i][2] - pts[j][2];
        double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        double w = 1.0 / std::max(d * d * d, 1e-6);
        fx += dx * w;
        fy += dy * w;
        fz += dz * w;
      }
      pts[i][0] += step * fx;
      pts[i][1] += step * fy;
      pts[i][2] += step * fz;
      double n = std::sqrt(pts[i][0] * pts[i][0] + pts[i][1] * pts[i][1] + pts[i][2] * pts[i][2]);
      if (n > 1.0) {
        pts[i][0] /= n;
        pts[i][1] /= n;
        pts[i][2] /= n;
      }
    }
    step *= 0.99;
  }

  for (auto& p : pts) {
    p[0] *= radius;
    p[1] *= radius;
    p[2] *= radius;
  }
  return pts;
}

}  // namespace aegis
