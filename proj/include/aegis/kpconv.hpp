#pragma once

#include "aegis/geometry.hpp"
#include "aegis/graph.hpp"

namespace aegis {

// Geometry a kernel-point convolution runs over. Everything is referenced,
// not copied; the pointed-to containers must outlive any graph built on them
// (in practice they live in a Pyramid or a model object).
struct KpGeometry {
  const std::vector<Vec3f>* queries;
  const std::vector<Vec3f>* supports;
  const NeighborIndex* nbrs;
  const std::vector<Vec3d>* offsets;  // kernel point positions, already scaled
  double sigma;                       // linear correlation reach
};

// Correlation-weighted neighborhood gather. For query q, kernel point k and
// input channel c:
//   out[q, k*Cin + c] = sum over neighbors y of max(0, 1 - |p_y - p_q - o_k| / sigma) * f[y, c]
// The weights depend only on geometry, so they are recomputed (not stored)
// in the backward pass.
Node* kp_gather(Graph& g, Node* features, const KpGeometry& geo);

// Full convolution: gather then multiply by the kernel weights, a rank-3
// parameter [K, Cin, Cout] viewed as [K*Cin, Cout].
Node* kp_conv(Graph& g, Node* features, Node* weights, const KpGeometry& geo);

}  // namespace aegis
