#pragma once

#include <string>

#include "aegis/dataset.hpp"
#include "aegis/metric.hpp"
#include "aegis/network.hpp"

namespace aegis {

// Every tunable in one flat `key = value` file. Unknown keys are rejected so
// typos fail loudly, and the resolved state hashes to a stable fingerprint
// that every command prints.
struct RunConfig {
  uint64_t seed = 7;
  int threads = 1;

  // dataset generation
  int data_rooms = 10;
  int data_keyframes = 8;
  double data_min_extent = 4.0;
  double data_max_extent = 6.0;
  double data_min_height = 2.4;
  double data_max_height = 3.0;
  int data_min_objects = 3;
  int data_max_objects = 6;
  double data_density = 80.0;
  double data_view_radius = 2.5;
  double data_dropout = 0.2;
  double data_jitter = 0.05;
  double data_circle_frac = 0.25;
  double data_unlabeled_frac = 0.02;

  // encoder
  int net_width = 16;
  int net_blocks = 5;
  int net_classes = 8;
  double net_cell0 = 0.04;
  double net_cell_growth = 2.0;
  double net_radius_scale = 2.5;
  double net_kp_extent = 1.5;
  int net_kernel_points = 15;
  int net_neighbor_cap = 26;
  uint64_t net_kernel_seed = 1337;
  double net_bn_momentum = 0.98;
  double net_bn_eps = 1e-5;
  double net_lrelu_slope = 0.1;
  std::vector<int> net_taps = {2, 4, 5};

  // embedding head
  int embed_heads = 4;
  int embed_fused_dim = 64;
  int embed_ff_ratio = 2;
  int embed_clusters = 64;
  int embed_out_dim = 256;
  bool embed_attention = true;

  // stage 1 (segmentation)
  int stage1_epochs = 50;
  double stage1_lr = 1e-2;
  double stage1_momentum = 0.98;
  double stage1_weight_decay = 1e-3;
  double stage1_lr_decay = 0.9772372209558107;

  // stage 2 (metric)
  int stage2_epochs = 20;
  double stage2_lr = 1e-4;
  double stage2_beta1 = 0.9;
  double stage2_beta2 = 0.999;
  double stage2_adam_eps = 1e-8;
  double stage2_weight_decay = 1e-3;
  double stage2_lr_decay = 0.95;
  int stage2_positives = 2;
  int stage2_negatives = 6;

  // loss and mining
  double loss_alpha = 0.5;
  double loss_beta = 0.2;
  double loss_pos_radius = 2.0;
  double loss_neg_radius = 4.0;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text, const std::string& origin);
  void validate() const;

  // Canonical dump of every key; its FNV-1a hash fingerprints the run.
  std::string resolved_text() const;
  uint64_t hash() const { return fnv1a64(resolved_text()); }

  SceneSpec scene() const;
  EncoderConfig encoder() const;
  EmbedConfig embed() const;
  Stage1Options stage1() const;
  Stage2Options stage2() const;
};

}  // namespace aegis
