#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aegis/geometry.hpp"

namespace aegis {

// Semantic palette used by the generator and the segmentation head.
inline constexpr int kNumClasses = 8;
extern const char* const kClassNames[kNumClasses];

// Layout of one synthetic indoor scene: rooms on a 10 m grid, each a shoebox
// with a handful of furniture shapes, scanned from a ring of viewpoints near
// the room center. Every quantity drawn depends only on the seed.
struct SceneSpec {
  uint64_t seed = 7;
  int rooms = 10;
  int keyframes_per_room = 8;
  double min_extent = 4.0;
  double max_extent = 6.0;
  double min_height = 2.4;
  double max_height = 3.0;
  int min_objects = 3;
  int max_objects = 6;
  double density = 80.0;       // surface points per square meter
  double view_radius = 2.5;    // keyframe keeps points within this of the viewpoint
  double dropout = 0.2;        // per-point drop chance per keyframe
  double jitter = 0.05;        // per-axis position noise half range, meters
  double circle_frac = 0.25;   // viewpoint ring radius over the min half extent
  double unlabeled_frac = 0.02;
};

struct ManifestItem {
  uint32_t id = 0;
  std::string room;
  std::string split;  // train, val or test
  Vec3d centroid{0.0, 0.0, 0.0};
  std::string path;   // keyframe file, derived from root/split/room/id
};

// Generates every keyframe under root/<split>/<room>/kf<id>.aegi plus a
// manifest.txt, splitting rooms 60/20/20 into train/val/test.
std::vector<ManifestItem> generate_dataset(const SceneSpec& spec, const std::string& root);

std::vector<ManifestItem> load_manifest(const std::string& root);

// Binary keyframe IO. Corrupt input fails with the byte offset.
void write_keyframe(const std::string& path, const RgbPointCloud& cloud);
RgbPointCloud read_keyframe(const std::string& path);

// Reads an ascii ply with x,y,z and red,green,blue (u8), optionally a label
// property. Colors keep their 8-bit values; label defaults to unlabeled.
RgbPointCloud import_ply(const std::string& path);

}  // namespace aegis
