#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aegis/common.hpp"

namespace aegis {

using Vec3f = std::array<float, 3>;
using Vec3d = std::array<double, 3>;

// A colored indoor keyframe. Positions are meters, colors 8-bit, labels are
// semantic class ids with 255 meaning unlabeled.
struct RgbPointCloud {
  std::vector<Vec3f> pos;
  std::vector<std::array<uint8_t, 3>> color;
  std::vector<uint8_t> label;
  std::string room;

  int size() const { return static_cast<int>(pos.size()); }
  bool has_labels() const { return !label.empty(); }
};

// Permutation that sorts points by position, then color, then label. Two
// clouds that differ only by point order map to the same sorted cloud, which
// is what makes the whole pipeline order-independent.
std::vector<int> canonical_order(const RgbPointCloud& cloud);
RgbPointCloud apply_order(const RgbPointCloud& cloud, const std::vector<int>& order);

// Voxel-grid pooling. Output voxels are ordered by their integer grid
// coordinate, and each centroid is accumulated over members sorted by
// position, so the result is identical for any input permutation.
struct GridSubsample {
  std::vector<Vec3f> centers;
  std::vector<int> voxel_of;  // input row -> center row
  std::vector<int> counts;    // members per center
};
GridSubsample grid_subsample(const std::vector<Vec3f>& pos, double cell);

// Neighbor lists in CSR form; each query's list is sorted by support index.
struct NeighborIndex {
  std::vector<int> offsets;  // size queries+1
  std::vector<int> items;

  int count(int q) const { return offsets[q + 1] - offsets[q]; }
  const int* begin_of(int q) const { return items.data() + offsets[q]; }
};

// All supports within `radius` of each query. When a query has more than
// `cap` candidates the closest ones win, ties broken by lower index.
NeighborIndex radius_neighbors(const std::vector<Vec3f>& queries, const std::vector<Vec3f>& supports,
                               double radius, int cap);

// Index of the closest support for each query, ties to the lower index.
std::vector<int> nearest_indices(const std::vector<Vec3f>& queries, const std::vector<Vec3f>& supports);

// Deterministic kernel-point disposition inside a ball: one point pinned at
// the origin, the rest seeded uniformly and spread by pairwise repulsion.
std::vector<Vec3d> kernel_points(int count, double radius, uint64_t seed);

}  // namespace aegis
