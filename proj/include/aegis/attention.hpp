#pragma once

#include <string>

#include "aegis/graph.hpp"
#include "aegis/params.hpp"

namespace aegis {

// One self-attention layer: per-head projections, scaled dot-product mixing,
// head concat, a fusion projection, then a two-layer feed-forward that maps
// to d_out. No residuals, positional encoding or layer norm.
struct SAConfig {
  int d_model = 64;
  int heads = 4;
  int d_out = 64;
  int ff_hidden = 128;  // feed-forward hidden width
  double lrelu_slope = 0.1;
  bool enabled = true;  // when off, the mixing stages are skipped and the
                        // feed-forward runs on the raw input (ablation hook)
};

void register_sa_params(ParamStore& store, const std::string& prefix, const SAConfig& cfg, Rng& rng);

// softmax(q kᵀ / sqrt(d_k)) v. If attn_out is given it receives the
// attention-weight node.
Node* scaled_dot_attention(Graph& g, Node* q, Node* k, Node* v, Node** attn_out = nullptr);

Node* sa_layer(Graph& g, ParamStore& store, const std::string& prefix, Node* x, const SAConfig& cfg);

}  // namespace aegis
