#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "aegis/geometry.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace aegis;
using testutil::permute_cloud;
using testutil::random_cloud;
using testutil::random_permutation;

namespace {

// Reference voxel pooling: integer cell keys, centroid per cell.
std::map<std::array<int64_t, 3>, std::pair<Vec3d, int>> brute_voxels(const std::vector<Vec3f>& pos,
                                                                     double cell) {
  std::map<std::array<int64_t, 3>, std::pair<Vec3d, int>> cells;
  for (const auto& p : pos) {
    std::array<int64_t, 3> key;
    for (int a = 0; a < 3; ++a) key[a] = static_cast<int64_t>(std::floor(p[a] / cell));
    auto& [sum, count] = cells[key];
    for (int a = 0; a < 3; ++a) sum[a] += p[a];
    count += 1;
  }
  return cells;
}

double sq_dist(const Vec3f& a, const Vec3f& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

TEST_CASE("grid_subsample agrees with a brute force voxel map") {
  auto cloud = random_cloud(500, 42);
  double cell = 0.4;
  auto sub = grid_subsample(cloud.pos, cell);
  auto ref = brute_voxels(cloud.pos, cell);

  REQUIRE(sub.centers.size() == ref.size());
  // Output order is the key order of the reference map.
  int i = 0;
  for (const auto& [key, entry] : ref) {
    const auto& [sum, count] = entry;
    CHECK(sub.counts[i] == count);
    for (int a = 0; a < 3; ++a)
      CHECK(sub.centers[i][a] == doctest::Approx(sum[a] / count).epsilon(1e-6));
    ++i;
  }

  // Membership map sends each point into the voxel that contains it.
  REQUIRE(sub.voxel_of.size() == cloud.pos.size());
  for (size_t p = 0; p < cloud.pos.size(); ++p) {
    const auto& c = sub.centers[sub.voxel_of[p]];
    for (int a = 0; a < 3; ++a)
      CHECK(std::floor(cloud.pos[p][a] / cell) == std::floor(c[a] / cell));
  }
}

TEST_CASE("grid_subsample is exactly permutation invariant") {
  auto cloud = random_cloud(300, 7);
  auto sub = grid_subsample(cloud.pos, 0.3);
  for (uint64_t s = 1; s <= 3; ++s) {
    auto perm = random_permutation(cloud.size(), s);
    auto shuffled = permute_cloud(cloud, perm);
    auto sub2 = grid_subsample(shuffled.pos, 0.3);
    REQUIRE(sub2.centers.size() == sub.centers.size());
    for (size_t i = 0; i < sub.centers.size(); ++i) {
      CHECK(sub2.centers[i] == sub.centers[i]);  // bitwise, not approximate
      CHECK(sub2.counts[i] == sub.counts[i]);
    }
    for (int i = 0; i < cloud.size(); ++i) CHECK(sub2.voxel_of[i] == sub.voxel_of[perm[i]]);
  }
}

TEST_CASE("radius_neighbors matches a quadratic scan with cap semantics") {
  auto q = random_cloud(80, 1).pos;
  auto s = random_cloud(200, 2).pos;
  double radius = 0.8;
  int cap = 8;
  auto idx = radius_neighbors(q, s, radius, cap);

  REQUIRE(idx.offsets.size() == q.size() + 1);
  for (size_t i = 0; i < q.size(); ++i) {
    std::vector<std::pair<double, int>> cand;
    for (size_t j = 0; j < s.size(); ++j) {
      double d2 = sq_dist(q[i], s[j]);
      if (d2 <= radius * radius) cand.push_back({d2, static_cast<int>(j)});
    }
    std::sort(cand.begin(), cand.end());
    if (static_cast<int>(cand.size()) > cap) cand.resize(cap);
    std::vector<int> want;
    for (auto& [d2, j] : cand) want.push_back(j);
    std::sort(want.begin(), want.end());

    std::vector<int> got(idx.begin_of(static_cast<int>(i)),
                         idx.begin_of(static_cast<int>(i)) + idx.count(static_cast<int>(i)));
    CHECK(got == want);
  }
}

TEST_CASE("nearest_indices picks the closest support, ties to the lower index") {
  std::vector<Vec3f> supports = {{0, 0, 0}, {1, 0, 0}, {1, 0, 0}};
  std::vector<Vec3f> queries = {{0.2f, 0, 0}, {0.9f, 0, 0}, {1.0f, 0, 0}};
  auto idx = nearest_indices(queries, supports);
  CHECK(idx == std::vector<int>{0, 1, 1});

  auto q = random_cloud(60, 3).pos;
  auto s = random_cloud(90, 4).pos;
  auto got = nearest_indices(q, s);
  for (size_t i = 0; i < q.size(); ++i) {
    double best = sq_dist(q[i], s[0]);
    int want = 0;
    for (size_t j = 1; j < s.size(); ++j) {
      double d2 = sq_dist(q[i], s[j]);
      if (d2 < best) best = d2, want = static_cast<int>(j);
    }
    CHECK(got[i] == want);
  }
}

TEST_CASE("kernel_points are deterministic and well spread") {
  auto pts = kernel_points(15, 1.0, 1337);
  REQUIRE(pts.size() == 15);
  CHECK(pts[0] == Vec3d{0.0, 0.0, 0.0});
  double min_pair = 1e9;
  for (size_t i = 0; i < pts.size(); ++i) {
    double r2 = pts[i][0] * pts[i][0] + pts[i][1] * pts[i][1] + pts[i][2] * pts[i][2];
    CHECK(r2 <= 1.0 + 1e-9);
    for (size_t j = i + 1; j < pts.size(); ++j) {
      double d2 = 0.0;
      for (int a = 0; a < 3; ++a) d2 += (pts[i][a] - pts[j][a]) * (pts[i][a] - pts[j][a]);
      min_pair = std::min(min_pair, std::sqrt(d2));
    }
  }
  // Repulsion keeps dispositions from clumping; 15 points in a unit ball
  // should stay comfortably apart.
  CHECK(min_pair > 0.35);

  CHECK(kernel_points(15, 1.0, 1337) == pts);
  CHECK(kernel_points(15, 1.0, 4242) != pts);

  // Radius scales the disposition linearly.
  auto scaled = kernel_points(15, 2.5, 1337);
  for (size_t i = 0; i < pts.size(); ++i)
    for (int a = 0; a < 3; ++a) CHECK(scaled[i][a] == doctest::Approx(2.5 * pts[i][a]).epsilon(1e-12));
}

TEST_CASE("canonical_order sorts and is permutation stable") {
  auto cloud = random_cloud(200, 13);
  auto order = canonical_order(cloud);
  auto sorted = apply_order(cloud, order);

  for (int i = 1; i < sorted.size(); ++i) {
    auto key = [&](int k) {
      return std::tuple(sorted.pos[k][0], sorted.pos[k][1], sorted.pos[k][2], sorted.color[k][0],
                        sorted.color[k][1], sorted.color[k][2], sorted.label[k]);
    };
    CHECK(key(i - 1) <= key(i));
  }

  auto perm = random_permutation(cloud.size(), 99);
  auto shuffled = permute_cloud(cloud, perm);
  auto sorted2 = apply_order(shuffled, canonical_order(shuffled));
  CHECK(sorted2.pos == sorted.pos);
  CHECK(sorted2.color == sorted.color);
  CHECK(sorted2.label == sorted.label);
}
