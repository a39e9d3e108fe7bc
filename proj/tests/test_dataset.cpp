#include <fstream>
#include <map>
#include <set>
#include <string>

#include "aegis/dataset.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace aegis;
using testutil::TempDir;
using testutil::read_bytes;
using testutil::write_bytes;

namespace {

SceneSpec small_spec(uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.rooms = 5;
  s.keyframes_per_room = 3;
  s.density = 25.0;  // keep the files small
  return s;
}

}  // namespace

TEST_CASE("generation is reproducible and seed sensitive") {
  TempDir t1, t2, t3;
  auto m1 = generate_dataset(small_spec(7), t1.file("ds"));
  auto m2 = generate_dataset(small_spec(7), t2.file("ds"));
  auto m3 = generate_dataset(small_spec(8), t3.file("ds"));

  REQUIRE(m1.size() == m2.size());
  REQUIRE(m1.size() == 15);
  for (size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i].id == m2[i].id);
    CHECK(m1[i].room == m2[i].room);
    CHECK(m1[i].split == m2[i].split);
    CHECK(m1[i].centroid == m2[i].centroid);
    // Same seed means identical bytes on disk.
    CHECK(read_bytes(m1[i].path) == read_bytes(m2[i].path));
  }
  CHECK(read_bytes(t1.file("ds/manifest.txt")) == read_bytes(t2.file("ds/manifest.txt")));

  bool any_differs = false;
  for (size_t i = 0; i < m3.size() && !any_differs; ++i)
    any_differs = read_bytes(m3[i].path) != read_bytes(m1[i].path);
  CHECK(any_differs);
}

TEST_CASE("rooms split 60/20/20 and keyframes stay with their room") {
  TempDir tmp;
  auto manifest = generate_dataset(small_spec(3), tmp.file("ds"));

  std::map<std::string, std::set<std::string>> rooms_by_split;
  std::map<std::string, std::string> split_of_room;
  for (const auto& item : manifest) {
    rooms_by_split[item.split].insert(item.room);
    auto it = split_of_room.find(item.room);
    if (it == split_of_room.end())
      split_of_room[item.room] = item.split;
    else
      CHECK(it->second == item.split);
  }
  CHECK(rooms_by_split["train"].size() == 3);
  CHECK(rooms_by_split["val"].size() == 1);
  CHECK(rooms_by_split["test"].size() == 1);
}

TEST_CASE("manifest centroids are the capture viewpoints") {
  TempDir tmp;
  SceneSpec spec = small_spec(11);
  auto manifest = generate_dataset(spec, tmp.file("ds"));
  auto reloaded = load_manifest(tmp.file("ds"));
  REQUIRE(reloaded.size() == manifest.size());

  // Jitter moves each coordinate by at most spec.jitter after the radius cut.
  double reach = spec.view_radius + spec.jitter * std::sqrt(3.0);
  for (size_t i = 0; i < manifest.size(); ++i) {
    CHECK(reloaded[i].id == manifest[i].id);
    CHECK(reloaded[i].room == manifest[i].room);
    CHECK(reloaded[i].split == manifest[i].split);
    CHECK(reloaded[i].centroid == manifest[i].centroid);  // full precision round trip

    Vec3d view = manifest[i].centroid;
    CHECK(view[2] >= 1.3);
    CHECK(view[2] <= 1.6);

    auto cloud = read_keyframe(manifest[i].path);
    REQUIRE(cloud.size() > 0);
    double worst = 0.0;
    for (const auto& p : cloud.pos) {
      double d2 = 0.0;
      for (int a = 0; a < 3; ++a) d2 += (p[a] - view[a]) * (p[a] - view[a]);
      worst = std::max(worst, d2);
    }
    CHECK(std::sqrt(worst) <= reach + 1e-6);
  }
}

TEST_CASE("generated keyframes look like indoor scans") {
  TempDir tmp;
  auto manifest = generate_dataset(small_spec(19), tmp.file("ds"));
  int unlabeled = 0, total = 0;
  for (const auto& item : manifest) {
    auto cloud = read_keyframe(item.path);
    CHECK(cloud.size() > 200);
    CHECK(cloud.room == item.room);
    for (int i = 0; i < cloud.size(); ++i) {
      bool valid = cloud.label[i] < kNumClasses || cloud.label[i] == 255;
      CHECK(valid);
      unlabeled += cloud.label[i] == 255 ? 1 : 0;
    }
    total += cloud.size();
  }
  // Unlabeled fraction hovers around its 2% setting.
  double frac = static_cast<double>(unlabeled) / total;
  CHECK(frac > 0.005);
  CHECK(frac < 0.05);
}

TEST_CASE("keyframe files round trip including labels") {
  TempDir tmp;
  auto cloud = testutil::random_cloud(120, 5, "kitchen");
  auto path = tmp.file("kf.aegi");
  write_keyframe(path, cloud);
  auto back = read_keyframe(path);
  CHECK(back.room == cloud.room);
  CHECK(back.pos == cloud.pos);
  CHECK(back.color == cloud.color);
  CHECK(back.label == cloud.label);

  auto path2 = tmp.file("kf2.aegi");
  write_keyframe(path2, back);
  CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("corrupt keyframes fail closed with a byte offset") {
  TempDir tmp;
  auto path = tmp.file("kf.aegi");
  write_keyframe(path, testutil::random_cloud(50, 6));
  auto bytes = read_bytes(path);

  auto bad = bytes;
  bad[0] = 'Z';
  write_bytes(path, bad);
  CHECK_THROWS_AS(read_keyframe(path), Error);

  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  write_bytes(path, truncated);
  try {
    read_keyframe(path);
    FAIL("truncated keyframe was accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::format);
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }

  auto trailing = bytes;
  trailing.push_back(7);
  write_bytes(path, trailing);
  CHECK_THROWS_AS(read_keyframe(path), Error);
}

TEST_CASE("ascii ply import reads positions, colors and optional labels") {
  TempDir tmp;
  auto path = tmp.file("scan.ply");
  {
    std::ofstream out(path);
    out << "ply\nformat ascii 1.0\nelement vertex 2\n"
           "property float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\n"
           "end_header\n"
           "0.5 1.5 2.5 10 20 30\n"
           "-1 0 1 255 0 128\n";
  }
  auto cloud = import_ply(path);
  REQUIRE(cloud.size() == 2);
  CHECK(cloud.pos[0] == Vec3f{0.5f, 1.5f, 2.5f});
  CHECK(cloud.color[1] == std::array<uint8_t, 3>{255, 0, 128});
  CHECK(cloud.label[0] == 255);  // no label property: everything unlabeled

  auto labeled = tmp.file("labeled.ply");
  {
    std::ofstream out(labeled);
    out << "ply\nformat ascii 1.0\nelement vertex 1\n"
           "property float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\n"
           "property uchar label\n"
           "end_header\n"
           "1 2 3 4 5 6 2\n";
  }
  auto lcloud = import_ply(labeled);
  REQUIRE(lcloud.size() == 1);
  CHECK(lcloud.label[0] == 2);

  auto broken = tmp.file("broken.ply");
  write_bytes(broken, {'n', 'o', 'p', 'e'});
  CHECK_THROWS_AS(import_ply(broken), Error);
}
