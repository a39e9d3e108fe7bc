#include <cmath>
#include <sstream>

#include "aegis/embedding.hpp"
#include "aegis/network.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace aegis;
using testutil::permute_cloud;
using testutil::random_cloud;
using testutil::random_permutation;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.cell0 = 0.3;
  cfg.width = 4;
  cfg.classes = 3;
  return cfg;
}

}  // namespace

TEST_CASE("cell and width schedules double per block") {
  EncoderConfig cfg;
  cfg.cell0 = 0.1;
  cfg.width = 16;
  CHECK(cfg.cell_at(1) == doctest::Approx(0.1));
  CHECK(cfg.cell_at(3) == doctest::Approx(0.4));
  CHECK(cfg.width_at(1) == 16);
  CHECK(cfg.width_at(5) == 256);
}

TEST_CASE("pyramid levels shrink and wire up consistently") {
  EncoderNet net(tiny_config());
  auto cloud = random_cloud(400, 21);
  auto pyr = net.build_pyramid(cloud);

  REQUIRE(pyr.levels.size() == 5);
  CHECK(pyr.sorted.size() == cloud.size());
  CHECK(pyr.unsort.size() == cloud.pos.size());

  int below = cloud.size();
  for (int b = 1; b <= 5; ++b) {
    const auto& lvl = pyr.levels[b - 1];
    int n = static_cast<int>(lvl.points.size());
    CHECK(n >= 2);
    CHECK(n <= below);
    CHECK(lvl.sub.voxel_of.size() == static_cast<size_t>(below));
    for (int v : lvl.sub.voxel_of) {
      CHECK(v >= 0);
      CHECK(v < n);
    }
    CHECK(lvl.nbrs.offsets.size() == static_cast<size_t>(n) + 1);
    if (b > 1) {
      // Upsampling indices map the finer level into this one.
      CHECK(lvl.up_nearest.size() == pyr.levels[b - 2].points.size());
      for (int u : lvl.up_nearest) {
        CHECK(u >= 0);
        CHECK(u < n);
      }
    }
    below = n;
  }
}

TEST_CASE("clouds that collapse below two points are rejected") {
  EncoderNet net(tiny_config());
  RgbPointCloud tiny;
  tiny.room = "r";
  tiny.pos = {{0.f, 0.f, 0.f}, {0.01f, 0.f, 0.f}};
  tiny.color = {{10, 10, 10}, {20, 20, 20}};
  tiny.label = {0, 0};
  CHECK_THROWS_AS(net.build_pyramid(tiny), Error);
}

TEST_CASE("encoder taps are bitwise permutation invariant") {
  EncoderNet net(tiny_config());
  ParamStore store;
  Rng rng(77);
  net.register_encoder_params(store, rng);

  auto cloud = random_cloud(350, 33);
  auto perm = random_permutation(cloud.size(), 5);
  auto shuffled = permute_cloud(cloud, perm);

  Graph g1(false), g2(false);
  auto t1 = net.taps(net.encode(g1, store, net.build_pyramid(cloud), false));
  auto t2 = net.taps(net.encode(g2, store, net.build_pyramid(shuffled), false));
  REQUIRE(t1.size() == t2.size());
  for (size_t k = 0; k < t1.size(); ++k) {
    REQUIRE(t1[k]->val.shape == t2[k]->val.shape);
    for (int64_t i = 0; i < t1[k]->val.numel(); ++i) CHECK(t1[k]->val[i] == t2[k]->val[i]);
  }
}

TEST_CASE("decoder logits follow the caller's point order") {
  EncoderNet net(tiny_config());
  ParamStore store;
  Rng rng(78);
  net.register_encoder_params(store, rng);
  net.register_decoder_params(store, rng);

  auto cloud = random_cloud(300, 44);
  auto perm = random_permutation(cloud.size(), 8);
  auto shuffled = permute_cloud(cloud, perm);

  Graph g1(false), g2(false);
  auto pyr1 = net.build_pyramid(cloud);
  auto pyr2 = net.build_pyramid(shuffled);
  auto* logits1 = net.decode(g1, store, pyr1, net.encode(g1, store, pyr1, false), false);
  auto* logits2 = net.decode(g2, store, pyr2, net.encode(g2, store, pyr2, false), false);

  REQUIRE(logits1->val.shape == Shape{cloud.size(), 3});
  int cols = logits1->val.shape[1];
  for (int i = 0; i < cloud.size(); ++i)
    for (int j = 0; j < cols; ++j) CHECK(logits2->val.at(i, j) == logits1->val.at(perm[i], j));
}

TEST_CASE("training updates running statistics, inference leaves them alone") {
  EncoderNet net(tiny_config());
  ParamStore store;
  Rng rng(79);
  net.register_encoder_params(store, rng);

  auto cloud = random_cloud(200, 55);
  auto pyr = net.build_pyramid(cloud);
  auto snapshot = store.get("enc.b1.bn.run_mean").value;

  Graph inf(false);
  net.encode(inf, store, pyr, false);
  CHECK(store.get("enc.b1.bn.run_mean").value.v == snapshot.v);

  Graph train;
  net.encode(train, store, pyr, true);
  CHECK(store.get("enc.b1.bn.run_mean").value.v != snapshot.v);
}

TEST_CASE("running statistics are registered frozen") {
  EncoderNet net(tiny_config());
  ParamStore store;
  Rng rng(80);
  net.register_encoder_params(store, rng);
  net.register_decoder_params(store, rng);
  for (auto* p : store.all()) {
    bool is_stat = p->name.find("run_mean") != std::string::npos ||
                   p->name.find("run_var") != std::string::npos;
    CHECK(p->trainable == !is_stat);
  }
}

TEST_CASE("a tiny segmentation problem trains to high accuracy") {
  // Height bands with matching colors: about as separable as it gets.
  auto make = [](uint64_t seed) {
    Rng rng(seed);
    RgbPointCloud c;
    c.room = "r";
    for (int i = 0; i < 250; ++i) {
      float z = static_cast<float>(rng.uniform(0.0, 3.0));
      int band = z < 1.0f ? 0 : (z < 2.0f ? 1 : 2);
      c.pos.push_back({static_cast<float>(rng.uniform(0.0, 3.0)),
                       static_cast<float>(rng.uniform(0.0, 3.0)), z});
      uint8_t shade = static_cast<uint8_t>(40 + 80 * band);
      c.color.push_back({shade, shade, shade});
      c.label.push_back(static_cast<uint8_t>(band));
    }
    return c;
  };
  std::vector<RgbPointCloud> clouds = {make(1), make(2), make(3)};

  EncoderNet net(tiny_config());
  ParamStore store;
  Rng rng(81);
  net.register_encoder_params(store, rng);
  net.register_decoder_params(store, rng);

  Stage1Options opt;
  opt.epochs = 6;
  opt.lr = 1e-2;
  opt.seed = 3;
  std::ostringstream log;
  auto result = train_stage1(net, store, clouds, opt, log);
  CHECK(result.final_accuracy > 0.85);
  CHECK(result.final_loss < 1.0);

  // One log line per epoch, each with epoch, loss and accuracy.
  int lines = 0;
  std::istringstream in(log.str());
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == opt.epochs);
}

TEST_CASE("segmentation_accuracy skips unlabeled rows") {
  Tensor logits = tensor2d({{2.0, 0.0}, {0.0, 2.0}, {2.0, 0.0}});
  CHECK(segmentation_accuracy(logits, {0, 1, 1}) == doctest::Approx(2.0 / 3.0));
  CHECK(segmentation_accuracy(logits, {0, 1, 255}) == doctest::Approx(1.0));
}
