#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aegis/embedding.hpp"
#include "aegis/graph.hpp"

namespace aegis {

// Where a keyframe was taken from; the unit of truth for mining and recall.
struct PlaceRecord {
  uint32_t id = 0;
  std::string room;
  Vec3d centroid{0.0, 0.0, 0.0};
};

struct MarginConfig {
  double alpha = 0.5;
  double beta = 0.2;
  double pos_radius = 2.0;  // same room and closer than this: positive
  double neg_radius = 4.0;  // different room or at least this far: negative
};

// The band [pos_radius, neg_radius) within one room is neither.
bool is_positive(const PlaceRecord& a, const PlaceRecord& b, const MarginConfig& m);
bool is_negative(const PlaceRecord& a, const PlaceRecord& b, const MarginConfig& m);

struct TrainingTuple {
  int anchor = -1;
  std::vector<int> positives;
  std::vector<int> negatives;
  int distractor = -1;  // room differs from every other member's room
};

// Uniform sampling without replacement from the valid candidate sets. Fails
// with a mining error naming the anchor when a set is too small.
TrainingTuple mine_tuple(const std::vector<PlaceRecord>& records, int anchor, int n_pos, int n_neg,
                         const MarginConfig& m, uint64_t seed);

// Descriptor distance as a graph node: |a - b| over flattened entries.
Node* descriptor_distance(Graph& g, Node* a, Node* b);

// max over (i,j) of [alpha + d(a,p_i) - d(a,n_j)]_+
//   plus max over (i,k) of [beta + d(a,p_i) - d(n_k, p*)]_+
Node* lazy_quadruplet_loss(Graph& g, Node* anchor, const std::vector<Node*>& positives,
                           const std::vector<Node*>& negatives, Node* distractor, double alpha,
                           double beta);

// Same computation on plain tensors, for callers without a graph.
double lazy_quadruplet_loss_value(const Tensor& anchor, const std::vector<Tensor>& positives,
                                  const std::vector<Tensor>& negatives, const Tensor& distractor,
                                  double alpha, double beta);

struct Stage2Options {
  int epochs = 20;
  int positives = 2;
  int negatives = 6;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-3;
  double lr_decay = 0.95;
  MarginConfig margins;
  uint64_t seed = 1;
};

struct Stage2Result {
  double final_mean_loss = 0.0;
  double final_active_rate = 0.0;  // fraction of hinge maxima above zero
};

// Metric training of the embedding head. The encoder parameters are marked
// frozen and only ever run in inference mode, so their values and running
// statistics stay untouched. records[i] describes clouds[i].
Stage2Result train_stage2(const EncoderNet& net, ParamStore& enc_store, ParamStore& emb_store,
                          const EmbedConfig& cfg, const std::vector<RgbPointCloud>& clouds,
                          const std::vector<PlaceRecord>& records, const Stage2Options& opt,
                          std::ostream& log);

}  // namespace aegis
