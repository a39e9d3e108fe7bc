#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "aegis/geometry.hpp"
#include "aegis/kpconv.hpp"
#include "aegis/params.hpp"

namespace aegis {

struct EncoderConfig {
  int blocks = 5;
  int width = 16;              // first block output width; doubles per block
  int classes = 8;
  double cell0 = 0.04;         // block-1 voxel size, meters
  double cell_growth = 2.0;
  double radius_scale = 2.5;   // convolution radius = radius_scale * cell
  double kp_extent = 1.5;      // kernel disposition radius = kp_extent * cell
  int kernel_points = 15;
  int neighbor_cap = 26;
  uint64_t kernel_seed = 1337;
  double bn_momentum = 0.98;
  double bn_eps = 1e-5;
  double lrelu_slope = 0.1;
  std::vector<int> tap_blocks = {2, 4, 5};  // 1-based blocks feeding the embedding

  double cell_at(int block) const;   // 1-based
  int width_at(int block) const;     // 1-based; block b outputs width * 2^(b-1)
};

// Geometry of one pyramid level (everything a forward pass needs that does
// not depend on parameters). Built once per cloud and reused.
struct PyramidLevel {
  std::vector<Vec3f> points;
  GridSubsample sub;              // pooling from the level below
  NeighborIndex nbrs;             // conv neighborhoods within this level
  std::vector<int> up_nearest;    // for each point one level below, its nearest point here
};

struct Pyramid {
  RgbPointCloud sorted;           // canonical point order
  std::vector<int> unsort;        // sorted row for each caller row
  std::vector<PyramidLevel> levels;

  int level_count(int block) const { return static_cast<int>(levels[block - 1].points.size()); }
};

// The segmentation network: a KP-Conv encoder over a voxel pyramid plus a
// nearest-neighbor upsampling decoder with skip connections.
class EncoderNet {
 public:
  explicit EncoderNet(EncoderConfig cfg);

  const EncoderConfig& config() const { return cfg_; }

  // Parameter registration; call once per store before running.
  void register_encoder_params(ParamStore& store, Rng& rng) const;  // enc.*
  void register_decoder_params(ParamStore& store, Rng& rng) const;  // dec.*

  // Geometry for one cloud. Fails on clouds that collapse to fewer than two
  // points at any level.
  Pyramid build_pyramid(const RgbPointCloud& cloud) const;

  // Per-block output features (index b-1 for block b), rows in pyramid order.
  std::vector<Node*> encode(Graph& g, ParamStore& store, const Pyramid& pyr, bool training) const;

  // Tap features for the embedding head, in tap_blocks order.
  std::vector<Node*> taps(const std::vector<Node*>& block_feats) const;

  // Class logits per input point, rows in the caller's original order.
  Node* decode(Graph& g, ParamStore& store, const Pyramid& pyr, const std::vector<Node*>& block_feats,
               bool training) const;

 private:
  Node* unary(Graph& g, ParamStore& store, Node* x, const std::string& name, bool training) const;

  EncoderConfig cfg_;
  std::vector<std::vector<Vec3d>> offsets_;  // kernel dispositions per block
};

struct Stage1Options {
  int epochs = 50;
  double lr = 1e-2;
  double momentum = 0.98;
  double weight_decay = 1e-3;
  double lr_decay = 0.9772372209558107;  // reaches a tenth of the rate in 100 epochs
  uint64_t seed = 1;
};

struct Stage1Result {
  double final_loss = 0.0;
  double final_accuracy = 0.0;  // inference-mode accuracy over the training split
};

// Trains encoder + decoder on labeled clouds with per-cloud SGD steps.
// Logs one `epoch,loss,accuracy` line per epoch.
Stage1Result train_stage1(EncoderNet& net, ParamStore& store, const std::vector<RgbPointCloud>& clouds,
                          const Stage1Options& opt, std::ostream& log);

// Fraction of labeled points whose argmax class matches; rows with label 255
// are skipped. Logits rows follow the cloud's own point order.
double segmentation_accuracy(const Tensor& logits, const std::vector<uint8_t>& labels);

}  // namespace aegis
