#pragma once

#include <vector>

#include "aegis/attention.hpp"
#include "aegis/netvlad.hpp"
#include "aegis/network.hpp"

namespace aegis {

// Attention-guided descriptor head. Each encoder tap runs through its own
// self-attention layer projecting to a shared width, the per-level outputs
// are stacked along the point axis, a fusion self-attention layer mixes
// across levels, and soft-assignment aggregation produces one global
// descriptor on the unit sphere.
struct EmbedConfig {
  std::vector<int> tap_widths;  // widths of the encoder taps, in tap order
  int heads = 4;
  int fused_dim = 64;
  int ff_ratio = 2;
  int clusters = 64;
  int out_dim = 256;
  double lrelu_slope = 0.1;
  bool attention = true;
};

void register_embed_params(ParamStore& store, const EmbedConfig& cfg, Rng& rng);  // emb.*

// taps: feature nodes in tap order (any row counts). Returns [1, out_dim].
Node* embed_run(Graph& g, ParamStore& store, const std::vector<Node*>& taps, const EmbedConfig& cfg);

// Full inference pipeline: cloud -> pyramid -> encoder taps -> descriptor.
Tensor describe(const EncoderNet& net, ParamStore& enc_store, ParamStore& emb_store,
                const EmbedConfig& cfg, const RgbPointCloud& cloud);

// Encoder tap features for one cloud in inference mode, as plain tensors.
// Stage 2 caches these since the encoder stays frozen.
std::vector<Tensor> tap_features(const EncoderNet& net, ParamStore& enc_store, const Pyramid& pyr);

}  // namespace aegis
