#pragma once

#include <string>

#include "aegis/graph.hpp"
#include "aegis/params.hpp"

namespace aegis {

struct NetVladConfig {
  int in_dim = 64;
  int clusters = 64;
  int out_dim = 256;
};

void register_netvlad_params(ParamStore& store, const std::string& prefix, const NetVladConfig& cfg,
                             Rng& rng);

// Soft-assigned residual aggregation over the rows of x [n, in_dim]:
// cluster residual sums, intra-normalized per cluster, flattened, normalized,
// projected to out_dim and normalized again. Returns a [1, out_dim] node on
// the unit sphere.
Node* netvlad(Graph& g, ParamStore& store, const std::string& prefix, Node* x, const NetVladConfig& cfg);

}  // namespace aegis
